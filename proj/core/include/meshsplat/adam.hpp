#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace meshsplat {

/// Per-parameter-group Adam state: first/second moments, step count, and the
/// hyperparameters used for every update of this group.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState make(std::size_t n, double lr);
};

/// Bias-corrected Adam update in place. Parameter and gradient spans must
/// match the state size.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Keeps moments only for the selected parameter rows (used after pruning);
/// `stride` values per row.
void adam_select_rows(AdamState& state, const std::vector<int>& keep, int stride);

/// Appends zeroed moments for `added` new rows of `stride` values each.
void adam_append_rows(AdamState& state, int added, int stride);

}  // namespace meshsplat
