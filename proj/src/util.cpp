#include "kinuq/util.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <thread>
#include <vector>

namespace kinuq {

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void parallel_for(Index n, const std::function<void(Index)>& body, int n_jobs) {
  if (n <= 0) return;
  int jobs = n_jobs > 0 ? n_jobs : static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (jobs == 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  const Index block = (n + jobs - 1) / jobs;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int w = 0; w < jobs; ++w) {
    const Index lo = w * block;
    const Index hi = std::min(n, lo + block);
    workers.emplace_back([&, lo, hi]() {
      try {
        for (Index i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

Array pairwise_colsum_range(const ArrayXX& block, Index lo, Index hi) {
  if (hi - lo <= 8) {
    Array acc = block.col(lo);
    for (Index j = lo + 1; j < hi; ++j) acc += block.col(j);
    return acc;
  }
  const Index mid = lo + (hi - lo) / 2;
  return pairwise_colsum_range(block, lo, mid) + pairwise_colsum_range(block, mid, hi);
}

}  // namespace

Array pairwise_colsum(const ArrayXX& block) {
  if (block.cols() == 0) return Array::Zero(block.rows());
  return pairwise_colsum_range(block, 0, block.cols());
}

std::string format_real(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace kinuq
