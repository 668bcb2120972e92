#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <exception>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dtc {

using cplx = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using MatR = Eigen::MatrixXd;
using VecC = Eigen::VectorXcd;
using VecR = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// SI constants (exact since 2019)
inline constexpr double kElementaryCharge = 1.602176634e-19;
inline constexpr double kPlanck = 6.62607015e-34;

// (2e)^2/2 / h with C in fF, result in GHz: multiply by n^T C^{-1} n (1/fF).
inline constexpr double kChargingGHzfF = 2.0 * kElementaryCharge * kElementaryCharge / kPlanck * 1e15 * 1e-9;

// E_J/h = Phi0 I_c / (2 pi h) = I_c / (4 pi e); per nA, in GHz.
inline constexpr double kJosephsonGHzPerNa = 1e-9 / (4.0 * std::numbers::pi * kElementaryCharge) * 1e-9;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input or configuration (maps to CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: non-convergence, tracking loss, unitarity drift (exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Wrap an angle into (-pi, pi].
inline double wrap_phase(double x) {
  double y = std::remainder(x, kTwoPi);
  if (y <= -kPi) y += kTwoPi;
  return y;
}

inline double sqr(double x) { return x * x; }

/// Runs f(i) for i in [0, n) on up to `threads` workers. Results must be written by index so the outcome does
/// not depend on scheduling. The first exception thrown is rethrown on the caller.
template <class F>
void parallel_for(int n, int threads, F&& f) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto work = [&] {
    for (int i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (!err) err = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace dtc
