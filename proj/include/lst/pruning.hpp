#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lst/side.hpp"

namespace lst {

enum class ImportanceMeasure { Magnitude, Fisher };
const char* importance_name(ImportanceMeasure m);

/// Per-weight importance, float64, same shape as the weight.
struct ImportanceMatrix {
  Tensor values;
  ImportanceMeasure measure = ImportanceMeasure::Magnitude;
};

/// Keyed by parameter name.
using ImportanceMap = std::map<std::string, ImportanceMatrix>;

/// I = W. Absolute values are taken when rows are scored.
ImportanceMatrix magnitude_importance(const Tensor& weight);
ImportanceMap magnitude_importance(const ParamList& params);

/// Negative log-likelihood of sample i, built on the given tape.
using SampleLoss = std::function<Var(Tape&, std::int64_t)>;

/// Mean over samples of the squared per-sample gradient, for every parameter
/// in params (trainable flags are forced on during the computation and then
/// restored).
ImportanceMap fisher_importance(const ParamList& params, std::int64_t samples, const SampleLoss& sample_nll);
/// Same, for the backbone on the first n rows of data.
ImportanceMap fisher_importance(const BackboneParams& backbone, const Batch& data, std::int64_t n);

/// s_i = sum_j |I_ij| over a rank-2 importance.
std::vector<double> row_scores(const Tensor& importance);

/// Indices of the k highest scores, ascending. Equal scores keep the lower index.
std::vector<std::int64_t> top_k_indices(const std::vector<double>& scores, std::int64_t k);

/// One matrix of a feed-forward chain. Its columns are pruned by the rows kept
/// in the previous link; its own rows are pruned when prune_rows is set.
struct ChainLink {
  Tensor weight;      // [d_out, d_in]
  Tensor bias;        // [d_out] or undefined
  Tensor importance;  // same shape as weight
  bool prune_rows = true;
};

struct PrunedLink {
  Tensor weight;
  Tensor bias;
  std::vector<std::int64_t> kept_rows;
  std::vector<std::int64_t> kept_cols;
};

std::vector<PrunedLink> structural_prune(const std::vector<ChainLink>& chain, int r);

/// Copies rows (axis 0) and columns (axis 1) of a rank-2 tensor, or entries of
/// a rank-1 tensor when cols is null.
Tensor gather(const Tensor& t, const std::vector<std::int64_t>& rows, const std::vector<std::int64_t>* cols = nullptr);

struct PruneResult {
  SideParams side;
  /// Kept indices by group: "<stack>.residual", "<stack>.<i>.self_attn",
  /// "<stack>.<i>.cross_attn", "<stack>.<i>.ff".
  std::map<std::string, std::vector<std::int64_t>> kept;
};

/// Side network whose blocks and final layer norms are pruned copies of the
/// backbone layers they tap. Each stack keeps one residual index set scored by
/// the rows of its residual-writing matrices (attention outputs and second FFN
/// matrices of the kept layers). Query/key/value rows are scored jointly and
/// kept head by head. Downsamplers come from seed; upsampler and gates are zero.
PruneResult prune_backbone_to_side(const BackboneParams& backbone, const ImportanceMap& importance,
                                   const SideConfig& side, std::uint64_t seed);

/// Text report of kept indices, one group per line.
std::string format_kept(const PruneResult& result);

}  // namespace lst
