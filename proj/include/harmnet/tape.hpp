#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "harmnet/error.hpp"
#include "harmnet/tensor.hpp"

namespace harmnet {

enum class Activation { none, tanh, sigmoid, relu };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
  }
  return "?";
}

// Parameter name -> gradient tensor of identical shape.
using GradientMap = std::map<std::string, Tensor>;

// Records primitive applications eagerly; backward() replays them in
// reverse, accumulating gradients into every named leaf. One tape per
// forward/backward pass, confined to a single thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t node_count() const { return nodes_.size(); }

  // Registers a trainable parameter. Storage is shared, not copied, so the
  // caller's tensor and the leaf see the same values.
  Tensor leaf(const Tensor& value, const std::string& name) {
    for (const auto& n : nodes_)
      if (!n.name.empty() && n.name == name)
        throw ContractError("autodiff: parameter '" + name +
                            "' bound to tape twice");
    Tensor out = value;
    int id = push(value.shape(), value.storage(), name, nullptr);
    out.bind(this, id);
    return out;
  }

  // ---- elementwise / shape primitives ----

  Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    auto out = alloc(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = av[i] + bv[i];
    Src sa = src(a), sb = src(b);
    return record(a.shape(), out, [sa, sb](Tape& t, const Grad& g) {
      if (sa.id >= 0) {
        auto& da = t.grad(sa.id);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (sb.id >= 0) {
        auto& db = t.grad(sb.id);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
      }
    });
  }

  Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    auto out = alloc(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = av[i] - bv[i];
    Src sa = src(a), sb = src(b);
    return record(a.shape(), out, [sa, sb](Tape& t, const Grad& g) {
      if (sa.id >= 0) {
        auto& da = t.grad(sa.id);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (sb.id >= 0) {
        auto& db = t.grad(sb.id);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
      }
    });
  }

  Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    auto out = alloc(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = av[i] * bv[i];
    Src sa = src(a), sb = src(b);
    return record(a.shape(), out, [sa, sb](Tape& t, const Grad& g) {
      if (sa.id >= 0) {
        auto& da = t.grad(sa.id);
        const auto& bv2 = *sb.v;
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv2[i];
      }
      if (sb.id >= 0) {
        auto& db = t.grad(sb.id);
        const auto& av2 = *sa.v;
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av2[i];
      }
    });
  }

  // y = scale * x + shift, elementwise with scalar constants.
  Tensor affine(const Tensor& x, double scale, double shift) {
    auto out = alloc(x.shape());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out->size(); ++i)
      (*out)[i] = scale * xv[i] + shift;
    Src sx = src(x);
    return record(x.shape(), out, [sx, scale](Tape& t, const Grad& g) {
      if (sx.id < 0) return;
      auto& dx = t.grad(sx.id);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += scale * g[i];
    });
  }

  // Same values, different shape. Shares storage; no copy.
  Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
      throw DimensionError("autodiff: reshape " + shape_str(x.shape()) +
                           " -> " + shape_str(shape) + " changes element count");
    Src sx = src(x);
    return record(std::move(shape), x.storage(), [sx](Tape& t, const Grad& g) {
      if (sx.id < 0) return;
      auto& dx = t.grad(sx.id);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
  }

  // ---- linear algebra ----

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
      throw DimensionError("autodiff: matmul shape mismatch " +
                           shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::int64_t m = a.rows(), k = a.cols(), n = b.cols();
    auto out = alloc({m, n});
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out->data();
    for (std::int64_t i = 0; i < m; ++i) {
      double* orow = ov + i * n;
      const double* arow = av + i * k;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const double aik = arow[kk];
        if (aik == 0.0) continue;
        const double* brow = bv + kk * n;
        for (std::int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
    Src sa = src(a), sb = src(b);
    return record({m, n}, out, [sa, sb, m, k, n](Tape& t, const Grad& g) {
      if (sa.id >= 0) {
        auto& da = t.grad(sa.id);
        const auto& bv2 = *sb.v;
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t j = 0; j < n; ++j) {
            const double gij = g[static_cast<std::size_t>(i * n + j)];
            if (gij == 0.0) continue;
            for (std::int64_t kk = 0; kk < k; ++kk)
              da[static_cast<std::size_t>(i * k + kk)] +=
                  gij * bv2[static_cast<std::size_t>(kk * n + j)];
          }
      }
      if (sb.id >= 0) {
        auto& db = t.grad(sb.id);
        const auto& av2 = *sa.v;
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t kk = 0; kk < k; ++kk) {
            const double aik = av2[static_cast<std::size_t>(i * k + kk)];
            if (aik == 0.0) continue;
            for (std::int64_t j = 0; j < n; ++j)
              db[static_cast<std::size_t>(kk * n + j)] +=
                  aik * g[static_cast<std::size_t>(i * n + j)];
          }
      }
    });
  }

  // x: [m x n], bias: length-n vector added to every row.
  Tensor add_bias_rows(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.size() != x.cols())
      throw DimensionError("autodiff: add_bias_rows " + shape_str(x.shape()) +
                           " + " + shape_str(bias.shape()));
    const std::int64_t m = x.rows(), n = x.cols();
    auto out = alloc({m, n});
    const auto& xv = x.values();
    const auto& bv = bias.values();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j)
        (*out)[static_cast<std::size_t>(i * n + j)] =
            xv[static_cast<std::size_t>(i * n + j)] + bv[static_cast<std::size_t>(j)];
    Src sx = src(x), sb = src(bias);
    return record({m, n}, out, [sx, sb, m, n](Tape& t, const Grad& g) {
      if (sx.id >= 0) {
        auto& dx = t.grad(sx.id);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
      }
      if (sb.id >= 0) {
        auto& db = t.grad(sb.id);
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t j = 0; j < n; ++j)
            db[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i * n + j)];
      }
    });
  }

  // ---- nonlinearities ----

  Tensor activation(const Tensor& x, Activation kind) {
    if (kind == Activation::none) return x;
    auto out = alloc(x.shape());
    const auto& xv = x.values();
    switch (kind) {
      case Activation::tanh:
        for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = std::tanh(xv[i]);
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < out->size(); ++i)
          (*out)[i] = 1.0 / (1.0 + std::exp(-xv[i]));
        break;
      case Activation::relu:
        // subgradient 0 at x == 0
        for (std::size_t i = 0; i < out->size(); ++i)
          (*out)[i] = xv[i] > 0.0 ? xv[i] : 0.0;
        break;
      case Activation::none:
        break;
    }
    Src sx = src(x);
    auto saved = out;
    return record(x.shape(), out, [sx, saved, kind](Tape& t, const Grad& g) {
      if (sx.id < 0) return;
      auto& dx = t.grad(sx.id);
      const auto& y = *saved;
      switch (kind) {
        case Activation::tanh:
          for (std::size_t i = 0; i < g.size(); ++i)
            dx[i] += g[i] * (1.0 - y[i] * y[i]);
          break;
        case Activation::sigmoid:
          for (std::size_t i = 0; i < g.size(); ++i)
            dx[i] += g[i] * y[i] * (1.0 - y[i]);
          break;
        case Activation::relu:
          for (std::size_t i = 0; i < g.size(); ++i)
            if (y[i] > 0.0) dx[i] += g[i];
          break;
        case Activation::none:
          break;
      }
    });
  }

  // Row-wise softened softmax: exp(x/beta) / sum, computed with per-row max
  // subtraction. Masked entries (mask 0) are excluded and come out exactly 0.
  // An empty mask vector means all entries participate.
  Tensor softmax_rows(const Tensor& x, double beta,
                      const std::vector<std::uint8_t>& mask = {}) {
    if (beta <= 0.0)
      throw ParameterError("autodiff: softmax_rows beta must be > 0, got " +
                           std::to_string(beta));
    if (x.rank() != 2)
      throw DimensionError("autodiff: softmax_rows needs rank-2 tensor, got " +
                           shape_str(x.shape()));
    if (!mask.empty() && static_cast<std::int64_t>(mask.size()) != x.size())
      throw DimensionError("autodiff: softmax_rows mask size mismatch");
    const std::int64_t m = x.rows(), n = x.cols();
    auto out = alloc({m, n});
    const auto& xv = x.values();
    for (std::int64_t i = 0; i < m; ++i) {
      const std::size_t base = static_cast<std::size_t>(i * n);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::int64_t j = 0; j < n; ++j)
        if (mask.empty() || mask[base + j]) mx = std::max(mx, xv[base + j]);
      if (!std::isfinite(mx))
        throw InputError("autodiff: softmax_rows row " + std::to_string(i) +
                         " is fully masked");
      double z = 0.0;
      for (std::int64_t j = 0; j < n; ++j) {
        if (!mask.empty() && !mask[base + j]) continue;
        double e = std::exp((xv[base + j] - mx) / beta);
        (*out)[base + j] = e;
        z += e;
      }
      for (std::int64_t j = 0; j < n; ++j)
        if (mask.empty() || mask[base + j]) (*out)[base + j] /= z;
    }
    Src sx = src(x);
    auto saved = out;
    return record({m, n}, out, [sx, saved, beta, m, n](Tape& t, const Grad& g) {
      if (sx.id < 0) return;
      auto& dx = t.grad(sx.id);
      const auto& y = *saved;
      for (std::int64_t i = 0; i < m; ++i) {
        const std::size_t base = static_cast<std::size_t>(i * n);
        double dot = 0.0;
        for (std::int64_t j = 0; j < n; ++j) dot += g[base + j] * y[base + j];
        for (std::int64_t j = 0; j < n; ++j)
          dx[base + j] += y[base + j] / beta * (g[base + j] - dot);
      }
    });
  }

  // ---- structural ops ----

  Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty())
      throw ContractError("autodiff: concat of zero tensors");
    const auto& first = parts.front().shape();
    if (axis >= first.size())
      throw DimensionError("autodiff: concat axis " + std::to_string(axis) +
                           " out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
      if (p.rank() != first.size())
        throw DimensionError("autodiff: concat rank mismatch");
      for (std::size_t d = 0; d < first.size(); ++d)
        if (d != axis && p.shape()[d] != first[d])
          throw DimensionError("autodiff: concat non-concat axis mismatch " +
                               shape_str(p.shape()) + " vs " + shape_str(first));
      out_shape[axis] += p.shape()[axis];
    }
    std::int64_t inner = 1;
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
    std::int64_t outer = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    const std::int64_t out_block = out_shape[axis] * inner;

    auto out = alloc(out_shape);
    std::vector<Src> srcs;
    std::vector<std::int64_t> blocks;
    {
      std::int64_t off = 0;
      for (const auto& p : parts) {
        const std::int64_t blk = p.shape()[axis] * inner;
        const auto& pv = p.values();
        for (std::int64_t o = 0; o < outer; ++o)
          std::copy(pv.begin() + o * blk, pv.begin() + (o + 1) * blk,
                    out->begin() + o * out_block + off);
        srcs.push_back(src(p));
        blocks.push_back(blk);
        off += blk;
      }
    }
    return record(out_shape, out,
                  [srcs, blocks, outer, out_block](Tape& t, const Grad& g) {
                    std::int64_t off = 0;
                    for (std::size_t p = 0; p < srcs.size(); ++p) {
                      if (srcs[p].id >= 0) {
                        auto& dp = t.grad(srcs[p].id);
                        for (std::int64_t o = 0; o < outer; ++o)
                          for (std::int64_t i = 0; i < blocks[p]; ++i)
                            dp[static_cast<std::size_t>(o * blocks[p] + i)] +=
                                g[static_cast<std::size_t>(o * out_block + off + i)];
                      }
                      off += blocks[p];
                    }
                  });
  }

  // Inverted dropout: survivors scaled by 1/(1-rate) at train time so
  // inference is the identity.
  Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng,
                 bool training) {
    if (rate < 0.0 || rate >= 1.0)
      throw ParameterError("autodiff: dropout rate must be in [0,1), got " +
                           std::to_string(rate));
    if (!training || rate == 0.0) return x;
    auto keep = std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(x.size()));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double scale = 1.0 / (1.0 - rate);
    for (auto& k : *keep) k = uni(rng) < rate ? 0.0 : scale;
    auto out = alloc(x.shape());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out->size(); ++i) (*out)[i] = xv[i] * (*keep)[i];
    Src sx = src(x);
    return record(x.shape(), out, [sx, keep](Tape& t, const Grad& g) {
      if (sx.id < 0) return;
      auto& dx = t.grad(sx.id);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (*keep)[i];
    });
  }

  // y[i] = x[indices[i]]; duplicate indices accumulate on backward.
  Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& indices) {
    if (x.rank() != 2)
      throw DimensionError("autodiff: gather_rows needs rank-2 tensor");
    const std::int64_t m = x.rows(), c = x.cols();
    for (auto i : indices)
      if (i < 0 || i >= m)
        throw ContractError("autodiff: gather_rows index " + std::to_string(i) +
                            " out of range [0," + std::to_string(m) + ")");
    const std::int64_t r = static_cast<std::int64_t>(indices.size());
    auto out = alloc({r, c});
    const auto& xv = x.values();
    for (std::int64_t i = 0; i < r; ++i)
      std::copy(xv.begin() + indices[static_cast<std::size_t>(i)] * c,
                xv.begin() + (indices[static_cast<std::size_t>(i)] + 1) * c,
                out->begin() + i * c);
    Src sx = src(x);
    auto idx = std::make_shared<std::vector<std::int64_t>>(indices);
    return record({r, c}, out, [sx, idx, c](Tape& t, const Grad& g) {
      if (sx.id < 0) return;
      auto& dx = t.grad(sx.id);
      for (std::size_t i = 0; i < idx->size(); ++i) {
        const std::size_t dst = static_cast<std::size_t>((*idx)[i] * c);
        const std::size_t srcoff = i * static_cast<std::size_t>(c);
        for (std::int64_t j = 0; j < c; ++j) dx[dst + j] += g[srcoff + j];
      }
    });
  }

  // h: [B*n x d] report-major, weights: [B x n]; out[b] = sum_t w[b,t] h[b*n+t].
  Tensor rows_weighted_sum(const Tensor& h, const Tensor& weights) {
    if (h.rank() != 2 || weights.rank() != 2)
      throw DimensionError("autodiff: rows_weighted_sum needs rank-2 tensors");
    const std::int64_t b = weights.rows(), n = weights.cols(), d = h.cols();
    if (h.rows() != b * n)
      throw DimensionError("autodiff: rows_weighted_sum rows " +
                           shape_str(h.shape()) + " vs weights " +
                           shape_str(weights.shape()));
    auto out = alloc({b, d});
    const auto& hv = h.values();
    const auto& wv = weights.values();
    for (std::int64_t bb = 0; bb < b; ++bb)
      for (std::int64_t t = 0; t < n; ++t) {
        const double w = wv[static_cast<std::size_t>(bb * n + t)];
        if (w == 0.0) continue;
        const std::size_t row = static_cast<std::size_t>((bb * n + t) * d);
        for (std::int64_t j = 0; j < d; ++j)
          (*out)[static_cast<std::size_t>(bb * d + j)] += w * hv[row + j];
      }
    Src sh = src(h), sw = src(weights);
    return record({b, d}, out, [sh, sw, b, n, d](Tape& t, const Grad& g) {
      const auto& hv2 = *sh.v;
      const auto& wv2 = *sw.v;
      for (std::int64_t bb = 0; bb < b; ++bb)
        for (std::int64_t tt = 0; tt < n; ++tt) {
          const std::size_t row = static_cast<std::size_t>((bb * n + tt) * d);
          const std::size_t gb = static_cast<std::size_t>(bb * d);
          if (sh.id >= 0) {
            auto& dh = t.grad(sh.id);
            const double w = wv2[static_cast<std::size_t>(bb * n + tt)];
            if (w != 0.0)
              for (std::int64_t j = 0; j < d; ++j) dh[row + j] += w * g[gb + j];
          }
          if (sw.id >= 0) {
            auto& dw = t.grad(sw.id);
            double dot = 0.0;
            for (std::int64_t j = 0; j < d; ++j) dot += g[gb + j] * hv2[row + j];
            dw[static_cast<std::size_t>(bb * n + tt)] += dot;
          }
        }
    });
  }

  // Embedding lookup. Id 0 is the padding row: it emits zeros without
  // reading the table and receives no gradient.
  Tensor embed_rows(const Tensor& table, const std::vector<std::int64_t>& ids) {
    if (table.rank() != 2)
      throw DimensionError("autodiff: embed_rows table must be rank-2");
    const std::int64_t v = table.rows(), d = table.cols();
    for (std::size_t p = 0; p < ids.size(); ++p)
      if (ids[p] < 0 || ids[p] >= v)
        throw DataError("autodiff: token id " + std::to_string(ids[p]) +
                        " at position " + std::to_string(p) +
                        " outside vocabulary of size " + std::to_string(v));
    const std::int64_t m = static_cast<std::int64_t>(ids.size());
    auto out = alloc({m, d});
    const auto& tv = table.values();
    for (std::int64_t i = 0; i < m; ++i) {
      const std::int64_t id = ids[static_cast<std::size_t>(i)];
      if (id == 0) continue;  // structural zero row
      std::copy(tv.begin() + id * d, tv.begin() + (id + 1) * d,
                out->begin() + i * d);
    }
    Src st = src(table);
    auto idx = std::make_shared<std::vector<std::int64_t>>(ids);
    return record({m, d}, out, [st, idx, d](Tape& t, const Grad& g) {
      if (st.id < 0) return;
      auto& dt = t.grad(st.id);
      for (std::size_t i = 0; i < idx->size(); ++i) {
        const std::int64_t id = (*idx)[i];
        if (id == 0) continue;
        const std::size_t dst = static_cast<std::size_t>(id * d);
        const std::size_t srcoff = i * static_cast<std::size_t>(d);
        for (std::int64_t j = 0; j < d; ++j) dt[dst + j] += g[srcoff + j];
      }
    });
  }

  // Multi-width same-length 1-D convolution over a batch of sequences laid
  // out report-major ([batch*len x d_in]). Zero padding at sequence borders,
  // borders never cross report boundaries. filters[w] has shape
  // [width_w, d_in, channels]; outputs of all widths are concatenated along
  // the channel axis in the given width order.
  Tensor conv1d_same(const Tensor& x, std::int64_t batch, std::int64_t len,
                     const std::vector<std::int64_t>& widths,
                     const std::vector<Tensor>& filters,
                     const std::vector<Tensor>& biases, Activation act) {
    if (x.rank() != 2 || x.rows() != batch * len)
      throw DimensionError("autodiff: conv1d_same input " +
                           shape_str(x.shape()) + " not [batch*len x d]");
    if (widths.size() != filters.size() || widths.size() != biases.size())
      throw ContractError("autodiff: conv1d_same width/filter/bias count mismatch");
    const std::int64_t d_in = x.cols();
    std::int64_t channels = -1;
    for (std::size_t w = 0; w < widths.size(); ++w) {
      const auto& fs = filters[w].shape();
      if (fs.size() != 3 || fs[0] != widths[w] || fs[1] != d_in)
        throw DimensionError("autodiff: filter " + shape_str(fs) +
                             " does not match width " +
                             std::to_string(widths[w]) + ", d_in " +
                             std::to_string(d_in));
      if (channels < 0) channels = fs[2];
      if (fs[2] != channels || biases[w].size() != channels)
        throw DimensionError("autodiff: conv1d_same channel count mismatch");
      if (len < widths[w])
        throw InputError("autodiff: conv1d_same input length " +
                         std::to_string(len) + " shorter than filter width " +
                         std::to_string(widths[w]));
    }
    const std::int64_t num_w = static_cast<std::int64_t>(widths.size());
    const std::int64_t c_out = channels * num_w;
    auto out = alloc({batch * len, c_out});
    const double* xv = x.values().data();
    for (std::int64_t w = 0; w < num_w; ++w) {
      const std::int64_t k = widths[static_cast<std::size_t>(w)];
      const std::int64_t left = (k - 1) / 2;
      const double* fv = filters[static_cast<std::size_t>(w)].values().data();
      const double* bv = biases[static_cast<std::size_t>(w)].values().data();
      for (std::int64_t b = 0; b < batch; ++b) {
        const double* xr = xv + b * len * d_in;
        double* orow = out->data() + b * len * c_out;
        for (std::int64_t t = 0; t < len; ++t) {
          double* o = orow + t * c_out + w * channels;
          for (std::int64_t c = 0; c < channels; ++c) o[c] = bv[c];
          const std::int64_t j0 = std::max<std::int64_t>(0, left - t);
          const std::int64_t j1 = std::min<std::int64_t>(k, len - t + left);
          for (std::int64_t j = j0; j < j1; ++j) {
            const double* xrow = xr + (t + j - left) * d_in;
            const double* frow = fv + j * d_in * channels;
            for (std::int64_t e = 0; e < d_in; ++e) {
              const double xe = xrow[e];
              if (xe == 0.0) continue;
              const double* fc = frow + e * channels;
              for (std::int64_t c = 0; c < channels; ++c) o[c] += xe * fc[c];
            }
          }
          if (act == Activation::relu)
            for (std::int64_t c = 0; c < channels; ++c)
              if (o[c] < 0.0) o[c] = 0.0;
          else if (act == Activation::tanh)
            for (std::int64_t c = 0; c < channels; ++c) o[c] = std::tanh(o[c]);
          else if (act == Activation::sigmoid)
            for (std::int64_t c = 0; c < channels; ++c)
              o[c] = 1.0 / (1.0 + std::exp(-o[c]));
        }
      }
    }
    Src sx = src(x);
    std::vector<Src> sf, sb;
    for (std::size_t w = 0; w < widths.size(); ++w) {
      sf.push_back(src(filters[w]));
      sb.push_back(src(biases[w]));
    }
    auto saved = out;
    auto ws = std::make_shared<std::vector<std::int64_t>>(widths);
    return record(
        {batch * len, c_out}, out,
        [sx, sf, sb, saved, ws, batch, len, d_in, channels, c_out,
         act](Tape& t, const Grad& g) {
          const auto& y = *saved;
          const std::int64_t num_w = static_cast<std::int64_t>(ws->size());
          // gm = dLoss/d(pre-activation)
          std::vector<double> gm(g.size());
          switch (act) {
            case Activation::relu:
              for (std::size_t i = 0; i < g.size(); ++i)
                gm[i] = y[i] > 0.0 ? g[i] : 0.0;
              break;
            case Activation::tanh:
              for (std::size_t i = 0; i < g.size(); ++i)
                gm[i] = g[i] * (1.0 - y[i] * y[i]);
              break;
            case Activation::sigmoid:
              for (std::size_t i = 0; i < g.size(); ++i)
                gm[i] = g[i] * y[i] * (1.0 - y[i]);
              break;
            case Activation::none:
              std::copy(g.begin(), g.end(), gm.begin());
              break;
          }
          const auto& xv2 = *sx.v;
          for (std::int64_t w = 0; w < num_w; ++w) {
            const std::int64_t k = (*ws)[static_cast<std::size_t>(w)];
            const std::int64_t left = (k - 1) / 2;
            const auto& fsrc = sf[static_cast<std::size_t>(w)];
            const auto& bsrc = sb[static_cast<std::size_t>(w)];
            const auto& fv2 = *fsrc.v;
            double* df = fsrc.id >= 0 ? t.grad(fsrc.id).data() : nullptr;
            double* db = bsrc.id >= 0 ? t.grad(bsrc.id).data() : nullptr;
            double* dx = sx.id >= 0 ? t.grad(sx.id).data() : nullptr;
            for (std::int64_t b = 0; b < batch; ++b) {
              for (std::int64_t tpos = 0; tpos < len; ++tpos) {
                const double* go =
                    gm.data() + (b * len + tpos) * c_out + w * channels;
                if (db)
                  for (std::int64_t c = 0; c < channels; ++c) db[c] += go[c];
                const std::int64_t j0 = std::max<std::int64_t>(0, left - tpos);
                const std::int64_t j1 =
                    std::min<std::int64_t>(k, len - tpos + left);
                for (std::int64_t j = j0; j < j1; ++j) {
                  const std::size_t xrow = static_cast<std::size_t>(
                      (b * len + tpos + j - left) * d_in);
                  const std::size_t frow =
                      static_cast<std::size_t>(j * d_in * channels);
                  for (std::int64_t e = 0; e < d_in; ++e) {
                    const double xe = xv2[xrow + e];
                    if (df && xe != 0.0) {
                      double* fc = df + frow + e * channels;
                      for (std::int64_t c = 0; c < channels; ++c)
                        fc[c] += xe * go[c];
                    }
                    if (dx) {
                      const double* fc = fv2.data() + frow + e * channels;
                      double acc = 0.0;
                      for (std::int64_t c = 0; c < channels; ++c)
                        acc += fc[c] * go[c];
                      dx[xrow + e] += acc;
                    }
                  }
                }
              }
            }
          }
        });
  }

  // Non-overlapping per-channel max over windows of each report; the last
  // window may be shorter. Gradient goes to the first occurrence on ties.
  Tensor max_pool(const Tensor& x, std::int64_t batch, std::int64_t len,
                  std::int64_t window) {
    if (window < 1)
      throw ParameterError("autodiff: max_pool window must be >= 1");
    if (x.rank() != 2 || x.rows() != batch * len)
      throw DimensionError("autodiff: max_pool input " + shape_str(x.shape()) +
                           " not [batch*len x c]");
    const std::int64_t c = x.cols();
    const std::int64_t out_len = (len + window - 1) / window;
    auto out = alloc({batch * out_len, c});
    auto arg = std::make_shared<std::vector<std::int64_t>>(
        static_cast<std::size_t>(batch * out_len * c));
    const auto& xv = x.values();
    for (std::int64_t b = 0; b < batch; ++b)
      for (std::int64_t p = 0; p < out_len; ++p) {
        const std::int64_t t0 = p * window;
        const std::int64_t t1 = std::min(len, t0 + window);
        for (std::int64_t ch = 0; ch < c; ++ch) {
          double best = xv[static_cast<std::size_t>((b * len + t0) * c + ch)];
          std::int64_t best_t = t0;
          for (std::int64_t tt = t0 + 1; tt < t1; ++tt) {
            const double v = xv[static_cast<std::size_t>((b * len + tt) * c + ch)];
            if (v > best) {
              best = v;
              best_t = tt;
            }
          }
          (*out)[static_cast<std::size_t>((b * out_len + p) * c + ch)] = best;
          (*arg)[static_cast<std::size_t>((b * out_len + p) * c + ch)] =
              (b * len + best_t) * c + ch;
        }
      }
    Src sx = src(x);
    return record({batch * out_len, c}, out, [sx, arg](Tape& t, const Grad& g) {
      if (sx.id < 0) return;
      auto& dx = t.grad(sx.id);
      for (std::size_t i = 0; i < g.size(); ++i)
        dx[static_cast<std::size_t>((*arg)[i])] += g[i];
    });
  }

  // ---- reductions / losses ----

  Tensor sum_all(const Tensor& x) {
    auto out = alloc({1});
    double s = 0.0;
    for (double v : x.values()) s += v;
    (*out)[0] = s;
    Src sx = src(x);
    return record({1}, out, [sx](Tape& t, const Grad& g) {
      if (sx.id < 0) return;
      auto& dx = t.grad(sx.id);
      for (auto& v : dx) v += g[0];
    });
  }

  // Mean over the batch of -log max(probs[b, label_b], floor).
  Tensor nll_mean(const Tensor& probs, const std::vector<int>& labels,
                  double floor = 1e-12) {
    if (probs.rank() != 2 ||
        probs.rows() != static_cast<std::int64_t>(labels.size()))
      throw DimensionError("autodiff: nll_mean probs " +
                           shape_str(probs.shape()) + " vs " +
                           std::to_string(labels.size()) + " labels");
    const std::int64_t b = probs.rows(), c = probs.cols();
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] < 0 || labels[i] >= c)
        throw DataError("autodiff: label " + std::to_string(labels[i]) +
                        " at row " + std::to_string(i) + " outside [0," +
                        std::to_string(c) + ")");
    auto out = alloc({1});
    const auto& pv = probs.values();
    double loss = 0.0;
    for (std::int64_t i = 0; i < b; ++i)
      loss -= std::log(
          std::max(pv[static_cast<std::size_t>(i * c + labels[static_cast<std::size_t>(i)])],
                   floor));
    (*out)[0] = loss / static_cast<double>(b);
    Src sp = src(probs);
    auto lab = std::make_shared<std::vector<int>>(labels);
    return record({1}, out, [sp, lab, b, c, floor](Tape& t, const Grad& g) {
      if (sp.id < 0) return;
      auto& dp = t.grad(sp.id);
      const auto& pv2 = *sp.v;
      for (std::int64_t i = 0; i < b; ++i) {
        const std::size_t at =
            static_cast<std::size_t>(i * c + (*lab)[static_cast<std::size_t>(i)]);
        if (pv2[at] >= floor)
          dp[at] -= g[0] / (pv2[at] * static_cast<double>(b));
      }
    });
  }

  // ---- reverse sweep ----

  GradientMap backward(const Tensor& loss) {
    if (loss.tape() != this || !loss.recorded())
      throw ContractError("autodiff: backward on tensor not from this tape");
    if (!loss.is_scalar())
      throw ContractError("autodiff: backward needs a scalar loss, got " +
                          shape_str(loss.shape()));
    grads_.assign(nodes_.size(), {});
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      grads_[i].assign(nodes_[i].values->size(), 0.0);
    grads_[static_cast<std::size_t>(loss.node())][0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].backward) nodes_[i].backward(*this, grads_[i]);
    }
    GradientMap out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].name.empty()) continue;
      out.emplace(nodes_[i].name,
                  Tensor(nodes_[i].shape, std::move(grads_[i])));
    }
    grads_.clear();
    return out;
  }

 private:
  using Grad = std::vector<double>;

  struct Src {
    int id = -1;
    std::shared_ptr<std::vector<double>> v;
  };

  struct Node {
    Shape shape;
    std::shared_ptr<std::vector<double>> values;
    std::string name;  // non-empty for parameter leaves
    std::function<void(Tape&, const Grad&)> backward;
  };

  Src src(const Tensor& t) const {
    if (t.recorded() && t.tape() != this)
      throw ContractError("autodiff: tensor recorded on a different tape");
    return Src{t.recorded() ? t.node() : -1, t.storage()};
  }

  static std::shared_ptr<std::vector<double>> alloc(const Shape& s) {
    return std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(shape_size(s)), 0.0);
  }

  int push(Shape shape, std::shared_ptr<std::vector<double>> values,
           std::string name, std::function<void(Tape&, const Grad&)> bw) {
    nodes_.push_back(Node{std::move(shape), std::move(values), std::move(name),
                          std::move(bw)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  Tensor record(Shape shape, std::shared_ptr<std::vector<double>> values,
                std::function<void(Tape&, const Grad&)> bw) {
    Tensor out;
    out.shape_ = shape;
    out.values_ = values;
    int id = push(std::move(shape), std::move(values), "", std::move(bw));
    out.bind(this, id);
    return out;
  }

  std::vector<double>& grad(int id) {
    return grads_[static_cast<std::size_t>(id)];
  }

  static void require_same_shape(const char* op, const Tensor& a,
                                 const Tensor& b) {
    if (a.shape() != b.shape())
      throw DimensionError(std::string("autodiff: ") + op + " shape mismatch " +
                           shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }

  std::vector<Node> nodes_;
  std::vector<Grad> grads_;
};

}  // namespace harmnet
