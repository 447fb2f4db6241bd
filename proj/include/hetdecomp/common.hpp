#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hetdecomp {

// Stable error codes; the CLI maps input-side codes to exit 2 and
// estimation-side codes to exit 1.
enum class errc {
  missing_value,
  unknown_treatment_label,
  empty_arm,
  empty_group,
  overlapping_arms,
  invalid_fold_count,
  label_absent_in_fold,
  empty_cell,
  degenerate_denominator,
  singular_covariance,
  non_finite,
  invalid_alpha,
  invalid_partition,
  invalid_config,
  learner_failure,
  unknown_preset,
  io_error,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::missing_value: return "MissingValue";
    case errc::unknown_treatment_label: return "UnknownTreatmentLabel";
    case errc::empty_arm: return "EmptyArm";
    case errc::empty_group: return "EmptyGroup";
    case errc::overlapping_arms: return "OverlappingArms";
    case errc::invalid_fold_count: return "InvalidFoldCount";
    case errc::label_absent_in_fold: return "LabelAbsentInFold";
    case errc::empty_cell: return "EmptyCell";
    case errc::degenerate_denominator: return "DegenerateDenominator";
    case errc::singular_covariance: return "SingularCovariance";
    case errc::non_finite: return "NonFinite";
    case errc::invalid_alpha: return "InvalidAlpha";
    case errc::invalid_partition: return "InvalidPartition";
    case errc::invalid_config: return "InvalidConfig";
    case errc::learner_failure: return "LearnerFailure";
    case errc::unknown_preset: return "UnknownPreset";
    case errc::io_error: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  errc code() const { return code_; }

  // Input/configuration problems vs. estimation-time failures.
  bool input_side() const {
    switch (code_) {
      case errc::missing_value:
      case errc::unknown_treatment_label:
      case errc::empty_arm:
      case errc::empty_group:
      case errc::overlapping_arms:
      case errc::invalid_fold_count:
      case errc::invalid_alpha:
      case errc::invalid_partition:
      case errc::invalid_config:
      case errc::unknown_preset:
      case errc::io_error:
        return true;
      default:
        return false;
    }
  }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

// The decomposition has seven summands; index order is fixed everywhere:
// 0..3 are the direct terms, 4 is the within-group share/outcome covariance,
// 5 is its regression-adjusted counterpart ("4adj"), 6 is the share-shift term.
inline constexpr int kNumComponents = 7;

inline const char* component_label(int j) {
  static const char* names[kNumComponents] = {"0", "1", "2", "3", "4", "4adj", "5"};
  return names[j];
}

// Deterministic pairwise summation: fixed reduction tree independent of
// threading, with ~log2(n) rounding depth.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = x[0];
    for (std::size_t i = 1; i < n; ++i) s += x[i];
    return s;
  }
  std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

// SplitMix64 step; used to derive independent per-task seeds so results do
// not depend on the thread count.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HETDECOMP_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(0..count-1) on up to `threads` workers. Tasks must write only to
// their own slots; the first exception is rethrown on the caller.
inline void parallel_for(std::size_t count, int threads,
                         const std::function<void(std::size_t)>& fn) {
  threads = resolve_threads(threads);
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error = nullptr;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::mutex err_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        std::size_t i = next.fetch_add(1);
        if (i >= count || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace hetdecomp
