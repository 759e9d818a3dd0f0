#include "lst/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lst {

const char* importance_name(ImportanceMeasure m) {
  return m == ImportanceMeasure::Magnitude ? "magnitude" : "fisher";
}

ImportanceMatrix magnitude_importance(const Tensor& weight) {
  return {weight.to(DType::Float64), ImportanceMeasure::Magnitude};
}

ImportanceMap magnitude_importance(const ParamList& params) {
  ImportanceMap out;
  for (const auto& p : params) {
    if (p.value().rank() == 2) out.emplace(p.name(), magnitude_importance(p.value()));
  }
  return out;
}

ImportanceMap fisher_importance(const ParamList& params, std::int64_t samples, const SampleLoss& sample_nll) {
  if (samples < 1) throw ConfigError("fisher_importance: need at least one sample");
  std::vector<bool> was_trainable;
  for (auto p : params) {
    was_trainable.push_back(p.trainable());
    p.set_trainable(true);
  }
  std::map<std::string, std::vector<double>> acc;
  try {
    for (std::int64_t i = 0; i < samples; ++i) {
      Tape tape;
      Var nll = sample_nll(tape, i);
      GradMap grads = tape.backward(nll);
      for (const auto& [name, g] : grads) {
        auto& a = acc[name];
        if (a.empty()) a.assign(static_cast<std::size_t>(g.numel()), 0.0);
        for (std::int64_t j = 0; j < g.numel(); ++j) {
          const double v = g.at(j);
          if (!std::isfinite(v)) throw NumericError("fisher_importance: non-finite gradient for " + name);
          a[static_cast<std::size_t>(j)] += v * v;
        }
      }
    }
  } catch (...) {
    for (std::size_t k = 0; k < params.size(); ++k) Parameter(params[k]).set_trainable(was_trainable[k]);
    throw;
  }
  for (std::size_t k = 0; k < params.size(); ++k) Parameter(params[k]).set_trainable(was_trainable[k]);

  ImportanceMap out;
  const double inv = 1.0 / static_cast<double>(samples);
  for (const auto& p : params) {
    Tensor f(p.value().shape(), DType::Float64);
    auto it = acc.find(p.name());
    if (it != acc.end()) {
      auto dst = f.data<double>();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = it->second[j] * inv;
    }
    out[p.name()] = {f, ImportanceMeasure::Fisher};
  }
  return out;
}

ImportanceMap fisher_importance(const BackboneParams& backbone, const Batch& data, std::int64_t n) {
  if (n < 1) throw ConfigError("fisher_importance: need at least one sample");
  if (n > data.size()) {
    throw InputError("fisher_importance: asked for " + std::to_string(n) + " samples, data has " +
                     std::to_string(data.size()));
  }
  return fisher_importance(backbone.parameters(), n, [&](Tape& tape, std::int64_t i) {
    Batch row = data.rows(i, 1);
    auto out = backbone_forward(tape, backbone, row);
    return ops::cross_entropy(out.logits, row.targets, ops::Reduction::Sum);
  });
}

std::vector<double> row_scores(const Tensor& importance) {
  if (importance.rank() != 2) {
    throw DimensionError("row_scores: expected rank-2 importance, got " + shape_str(importance.shape()));
  }
  const auto rows = importance.dim(0);
  const auto cols = importance.dim(1);
  std::vector<double> s(static_cast<std::size_t>(rows), 0.0);
  for (std::int64_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) acc += std::abs(importance.at(i * cols + j));
    s[static_cast<std::size_t>(i)] = acc;
  }
  return s;
}

std::vector<std::int64_t> top_k_indices(const std::vector<double>& scores, std::int64_t k) {
  const auto n = static_cast<std::int64_t>(scores.size());
  if (k < 0 || k > n) throw ConfigError("top_k_indices: k=" + std::to_string(k) + " of " + std::to_string(n));
  std::vector<std::int64_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tensor gather(const Tensor& t, const std::vector<std::int64_t>& rows, const std::vector<std::int64_t>* cols) {
  if (t.rank() == 1) {
    Tensor out({static_cast<std::int64_t>(rows.size())}, t.dtype());
    dispatch_floating(t.dtype(), [&]<class T>() {
      auto src = t.data<T>();
      auto dst = out.data<T>();
      for (std::size_t i = 0; i < rows.size(); ++i) dst[i] = src[static_cast<std::size_t>(rows[i])];
    });
    return out;
  }
  if (t.rank() != 2 || !cols) throw DimensionError("gather: expected a vector, or a matrix with column indices");
  const auto in_cols = t.dim(1);
  Tensor out({static_cast<std::int64_t>(rows.size()), static_cast<std::int64_t>(cols->size())}, t.dtype());
  dispatch_floating(t.dtype(), [&]<class T>() {
    auto src = t.data<T>();
    auto dst = out.data<T>();
    std::size_t k = 0;
    for (auto r : rows) {
      for (auto c : *cols) dst[k++] = src[static_cast<std::size_t>(r * in_cols + c)];
    }
  });
  return out;
}

namespace {

std::vector<std::int64_t> iota_n(std::int64_t n) {
  std::vector<std::int64_t> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

std::vector<PrunedLink> structural_prune(const std::vector<ChainLink>& chain, int r) {
  if (r < 1) throw ConfigError("structural_prune: r must be >= 1");
  std::vector<PrunedLink> out;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const auto& link = chain[i];
    if (link.weight.rank() != 2) throw DimensionError("structural_prune: link " + std::to_string(i) + " is not a matrix");
    if (link.importance.shape() != link.weight.shape()) {
      throw DimensionError("structural_prune: link " + std::to_string(i) + " importance " +
                           shape_str(link.importance.shape()) + " vs weight " + shape_str(link.weight.shape()));
    }
    const auto d_out = link.weight.dim(0);
    const auto d_in = link.weight.dim(1);
    if (link.bias.defined() && link.bias.shape() != Shape{d_out}) {
      throw DimensionError("structural_prune: link " + std::to_string(i) + " bias " + shape_str(link.bias.shape()));
    }
    if (i > 0 && chain[i - 1].weight.dim(0) != d_in) {
      throw WiringError("structural_prune: link " + std::to_string(i - 1) + " has d_out " +
                        std::to_string(chain[i - 1].weight.dim(0)) + " but link " + std::to_string(i) +
                        " has d_in " + std::to_string(d_in));
    }
    PrunedLink p;
    p.kept_cols = i > 0 ? out.back().kept_rows : iota_n(d_in);
    if (link.prune_rows) {
      if (d_out % r != 0) {
        throw ConfigError("structural_prune: link " + std::to_string(i) + " d_out " + std::to_string(d_out) +
                          " not divisible by r=" + std::to_string(r));
      }
      p.kept_rows = top_k_indices(row_scores(link.importance), d_out / r);
    } else {
      p.kept_rows = iota_n(d_out);
    }
    p.weight = gather(link.weight, p.kept_rows, &p.kept_cols);
    if (link.bias.defined()) p.bias = gather(link.bias, p.kept_rows);
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

using Index = std::vector<std::int64_t>;

const Tensor& importance_of(const ImportanceMap& imp, const Parameter& p) {
  auto it = imp.find(p.name());
  if (it == imp.end()) throw WiringError("prune: no importance for " + p.name());
  if (it->second.values.shape() != p.value().shape()) {
    throw WiringError("prune: importance for " + p.name() + " has shape " + shape_str(it->second.values.shape()));
  }
  return it->second.values;
}

void add_scores(std::vector<double>& acc, const std::vector<double>& s) {
  if (acc.empty()) acc.assign(s.size(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) acc[i] += s[i];
}

void assign(Parameter dst, const Tensor& src) {
  if (dst.value().shape() != src.shape()) {
    throw WiringError("prune: " + dst.name() + " expects " + shape_str(dst.value().shape()) + ", pruned copy is " +
                      shape_str(src.shape()));
  }
  dst.value() = src.to(dst.value().dtype());
}

void copy_linear(const LinearParams& src, const LinearParams& dst, const Index& rows, const Index& cols) {
  assign(dst.weight, gather(src.weight.value(), rows, &cols));
  assign(dst.bias, gather(src.bias.value(), rows));
}

void copy_ln(const LayerNormParams& src, const LayerNormParams& dst, const Index& keep) {
  assign(dst.gamma, gather(src.gamma.value(), keep));
  assign(dst.beta, gather(src.beta.value(), keep));
}

Index prune_attention(const AttentionParams& src, const AttentionParams& dst, const ImportanceMap& imp,
                      const Index& resid, const Index& kv_cols, int r) {
  std::vector<double> s;
  add_scores(s, row_scores(importance_of(imp, src.q.weight)));
  add_scores(s, row_scores(importance_of(imp, src.k.weight)));
  add_scores(s, row_scores(importance_of(imp, src.v.weight)));
  const auto d_attn = src.q.d_out();
  const auto dh = d_attn / src.heads;
  Index kept;
  for (int h = 0; h < src.heads; ++h) {
    std::vector<double> head(s.begin() + h * dh, s.begin() + (h + 1) * dh);
    for (auto j : top_k_indices(head, dh / r)) kept.push_back(h * dh + j);
  }
  copy_linear(src.q, dst.q, kept, resid);
  copy_linear(src.k, dst.k, kept, kv_cols);
  copy_linear(src.v, dst.v, kept, kv_cols);
  copy_linear(src.o, dst.o, resid, kept);
  return kept;
}

Index residual_set(const std::vector<BlockParams>& blocks, const std::vector<int>& kept_layers,
                   const ImportanceMap& imp, std::int64_t width) {
  std::vector<double> s;
  for (int i : kept_layers) {
    const auto& b = blocks.at(static_cast<std::size_t>(i - 1));
    add_scores(s, row_scores(importance_of(imp, b.self_attn.o.weight)));
    if (b.has_cross) add_scores(s, row_scores(importance_of(imp, b.cross_attn.o.weight)));
    add_scores(s, row_scores(importance_of(imp, b.ff.out.weight)));
  }
  return top_k_indices(s, width);
}

void prune_stack(const std::string& tag, const std::vector<BlockParams>& blocks, const LayerNormParams& final_ln,
                 const SideStack& dst, const Index& resid, const Index* memory, const ImportanceMap& imp, int r,
                 PruneResult& res) {
  res.kept[tag + ".residual"] = resid;
  for (std::size_t j = 0; j < dst.kept.size(); ++j) {
    const auto& b = blocks.at(static_cast<std::size_t>(dst.kept[j] - 1));
    const auto& s = dst.blocks[j];
    const auto prefix = tag + "." + std::to_string(dst.kept[j]);
    copy_ln(b.ln_self, s.ln_self, resid);
    res.kept[prefix + ".self_attn"] = prune_attention(b.self_attn, s.self_attn, imp, resid, resid, r);
    if (b.has_cross) {
      copy_ln(b.ln_cross, s.ln_cross, resid);
      res.kept[prefix + ".cross_attn"] = prune_attention(b.cross_attn, s.cross_attn, imp, resid, *memory, r);
    }
    copy_ln(b.ln_ff, s.ln_ff, resid);
    const auto d_ff = b.ff.in.d_out();
    Index ff = top_k_indices(row_scores(importance_of(imp, b.ff.in.weight)), d_ff / r);
    copy_linear(b.ff.in, s.ff.in, ff, resid);
    copy_linear(b.ff.out, s.ff.out, resid, ff);
    res.kept[prefix + ".ff"] = ff;
  }
  copy_ln(final_ln, dst.final_ln, resid);
}

}  // namespace

PruneResult prune_backbone_to_side(const BackboneParams& backbone, const ImportanceMap& importance,
                                   const SideConfig& side, std::uint64_t seed) {
  const auto& model = backbone.config;
  PruneResult res;
  res.side = init_side_random(model, side, seed);
  const int r = res.side.config.reduction;
  const auto width = static_cast<std::int64_t>(res.side.width);
  Index enc = residual_set(backbone.enc, res.side.enc.kept, importance, width);
  prune_stack("enc", backbone.enc, backbone.enc_final, res.side.enc, enc, nullptr, importance, r, res);
  if (model.has_decoder()) {
    Index dec = residual_set(backbone.dec, res.side.dec.kept, importance, width);
    prune_stack("dec", backbone.dec, backbone.dec_final, res.side.dec, dec, &enc, importance, r, res);
  }
  return res;
}

std::string format_kept(const PruneResult& result) {
  std::ostringstream os;
  for (const auto& [group, idx] : result.kept) {
    os << group << '=';
    for (std::size_t i = 0; i < idx.size(); ++i) os << (i ? "," : "") << idx[i];
    os << '\n';
  }
  return os.str();
}

}  // namespace lst
