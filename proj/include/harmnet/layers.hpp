#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "harmnet/error.hpp"
#include "harmnet/tape.hpp"
#include "harmnet/tensor.hpp"

namespace harmnet {

// ---- parameter initialization ----

inline Tensor uniform_tensor(Shape shape, double lo, double hi,
                             std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> uni(lo, hi);
  for (auto& v : t.values()) v = uni(rng);
  return t;
}

inline Tensor glorot_tensor(Shape shape, std::int64_t fan_in,
                            std::int64_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_tensor(std::move(shape), -a, a, rng);
}

inline Tensor zeros_tensor(Shape shape) { return Tensor(std::move(shape)); }

inline Tensor constant_tensor(Shape shape, double v) {
  Tensor t(std::move(shape));
  for (auto& x : t.values()) x = v;
  return t;
}

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

// ---- embedding ----

// Token embedding matrix [vocab x dim]. Row 0 is the padding vector: it is
// initialized to zero, lookups of id 0 emit structural zeros, and its
// gradient is discarded, so it stays exactly zero through training.
struct EmbeddingTable {
  Tensor table;

  std::int64_t vocab_size() const { return table.rows(); }
  std::int64_t dim() const { return table.cols(); }

  void visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".table", table);
  }
};

inline EmbeddingTable make_embedding(std::int64_t vocab, std::int64_t dim,
                                     std::mt19937_64& rng) {
  if (vocab < 2)
    throw ConfigError("layers: embedding vocabulary must hold padding and unk");
  EmbeddingTable e{uniform_tensor({vocab, dim}, -0.05, 0.05, rng)};
  for (std::int64_t j = 0; j < dim; ++j) e.table.at(0, j) = 0.0;
  return e;
}

// ids are flattened report-major; returns [ids.size() x dim].
inline Tensor embed_sequence(Tape& tape, const std::vector<std::int64_t>& ids,
                             const Tensor& table) {
  return tape.embed_rows(table, ids);
}

// ---- convolution block ----

// One filter bank per width; all widths share the channel count and their
// outputs are concatenated along the channel axis.
struct ConvBlockParams {
  std::vector<std::int64_t> widths;
  std::vector<Tensor> filters;  // each [width x d_in x channels]
  std::vector<Tensor> biases;   // each [channels]
  std::int64_t channels = 0;

  std::int64_t out_channels() const {
    return channels * static_cast<std::int64_t>(widths.size());
  }

  void visit(const std::string& prefix, const ParamVisitor& fn) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::string w = std::to_string(widths[i]);
      fn(prefix + ".w" + w + ".filter", filters[i]);
      fn(prefix + ".w" + w + ".bias", biases[i]);
    }
  }
};

inline ConvBlockParams make_conv_block(const std::vector<std::int64_t>& widths,
                                       std::int64_t d_in, std::int64_t channels,
                                       std::mt19937_64& rng) {
  if (widths.empty()) throw ConfigError("layers: conv block needs >= 1 width");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    if (widths[i] >= widths[i + 1])
      throw ConfigError("layers: conv widths must be strictly increasing");
  if (widths.front() < 1) throw ConfigError("layers: conv width must be >= 1");
  ConvBlockParams p;
  p.widths = widths;
  p.channels = channels;
  for (auto k : widths) {
    p.filters.push_back(
        glorot_tensor({k, d_in, channels}, k * d_in, channels, rng));
    p.biases.push_back(zeros_tensor({channels}));
  }
  return p;
}

// Same-length convolution + relu over each report of a report-major batch.
inline Tensor conv1d_multi(Tape& tape, const Tensor& x, std::int64_t batch,
                           std::int64_t len, const ConvBlockParams& p) {
  return tape.conv1d_same(x, batch, len, p.widths, p.filters, p.biases,
                          Activation::relu);
}

inline Tensor conv1d_multi(Tape& tape, const Tensor& x,
                           const ConvBlockParams& p) {
  return conv1d_multi(tape, x, 1, x.rows(), p);
}

inline Tensor max_pool(Tape& tape, const Tensor& x, std::int64_t window) {
  return tape.max_pool(x, 1, x.rows(), window);
}

// ---- recurrent cells ----

enum class CellKind { plain, lstm, gru };

inline const char* cell_kind_name(CellKind k) {
  switch (k) {
    case CellKind::plain: return "plain";
    case CellKind::lstm: return "lstm";
    case CellKind::gru: return "gru";
  }
  return "?";
}

enum class Direction { forward, backward };

// Gate blocks, one triple (W, U, b) per gate:
//   lstm: input, forget, candidate, output
//   gru:  update, reset, candidate
//   plain: single block
struct RecurrentCellParams {
  CellKind kind = CellKind::plain;
  std::int64_t input_dim = 0;
  std::int64_t hidden = 0;
  std::vector<Tensor> w;  // each [input_dim x hidden]
  std::vector<Tensor> u;  // each [hidden x hidden]
  std::vector<Tensor> b;  // each [hidden]
  Activation plain_act = Activation::tanh;

  static const char* gate_name(CellKind kind, std::size_t g) {
    static const char* lstm_names[] = {"i", "f", "g", "o"};
    static const char* gru_names[] = {"z", "r", "h"};
    if (kind == CellKind::lstm) return lstm_names[g];
    if (kind == CellKind::gru) return gru_names[g];
    return "h";
  }

  void visit(const std::string& prefix, const ParamVisitor& fn) {
    for (std::size_t g = 0; g < w.size(); ++g) {
      const std::string gate = gate_name(kind, g);
      fn(prefix + "." + gate + ".w", w[g]);
      fn(prefix + "." + gate + ".u", u[g]);
      fn(prefix + "." + gate + ".b", b[g]);
    }
  }
};

inline RecurrentCellParams make_recurrent_cell(CellKind kind,
                                               std::int64_t input_dim,
                                               std::int64_t hidden,
                                               std::mt19937_64& rng) {
  RecurrentCellParams p;
  p.kind = kind;
  p.input_dim = input_dim;
  p.hidden = hidden;
  const std::size_t gates =
      kind == CellKind::lstm ? 4 : (kind == CellKind::gru ? 3 : 1);
  for (std::size_t g = 0; g < gates; ++g) {
    p.w.push_back(glorot_tensor({input_dim, hidden}, input_dim, hidden, rng));
    p.u.push_back(glorot_tensor({hidden, hidden}, hidden, hidden, rng));
    p.b.push_back(zeros_tensor({hidden}));
  }
  if (kind == CellKind::lstm) p.b[1] = constant_tensor({hidden}, 1.0);
  return p;
}

struct RnnState {
  Tensor h;
  Tensor c;  // lstm only
};

inline void check_step_shapes(const char* op, const Tensor& x, const Tensor& h,
                              const RecurrentCellParams& p) {
  if (x.rank() != 2 || x.cols() != p.input_dim)
    throw DimensionError(std::string("layers: ") + op + " input " +
                         shape_str(x.shape()) + " does not match cell input " +
                         std::to_string(p.input_dim));
  if (h.rank() != 2 || h.cols() != p.hidden || h.rows() != x.rows())
    throw DimensionError(std::string("layers: ") + op + " state " +
                         shape_str(h.shape()) + " does not match cell hidden " +
                         std::to_string(p.hidden));
}

inline Tensor gate_preact(Tape& t, const Tensor& x, const Tensor& h,
                          const RecurrentCellParams& p, std::size_t g) {
  return t.add_bias_rows(t.add(t.matmul(x, p.w[g]), t.matmul(h, p.u[g])),
                         p.b[g]);
}

// Graves-style LSTM without peepholes:
// i,f,o sigmoid gates, g tanh candidate, c' = f.c + i.g, h' = o.tanh(c').
inline RnnState lstm_step(Tape& t, const Tensor& x, const RnnState& state,
                          const RecurrentCellParams& p) {
  if (p.kind != CellKind::lstm)
    throw ContractError("layers: lstm_step on non-lstm cell");
  check_step_shapes("lstm_step", x, state.h, p);
  check_step_shapes("lstm_step", x, state.c, p);
  Tensor i = t.activation(gate_preact(t, x, state.h, p, 0), Activation::sigmoid);
  Tensor f = t.activation(gate_preact(t, x, state.h, p, 1), Activation::sigmoid);
  Tensor g = t.activation(gate_preact(t, x, state.h, p, 2), Activation::tanh);
  Tensor o = t.activation(gate_preact(t, x, state.h, p, 3), Activation::sigmoid);
  Tensor c_next = t.add(t.mul(f, state.c), t.mul(i, g));
  Tensor h_next = t.mul(o, t.activation(c_next, Activation::tanh));
  return {h_next, c_next};
}

// Cho et al. GRU: z,r sigmoid gates, candidate over the reset state,
// h' = (1-z).h + z.h~.
inline Tensor gru_step(Tape& t, const Tensor& x, const Tensor& h,
                       const RecurrentCellParams& p) {
  if (p.kind != CellKind::gru)
    throw ContractError("layers: gru_step on non-gru cell");
  check_step_shapes("gru_step", x, h, p);
  Tensor z = t.activation(gate_preact(t, x, h, p, 0), Activation::sigmoid);
  Tensor r = t.activation(gate_preact(t, x, h, p, 1), Activation::sigmoid);
  Tensor cand = t.activation(
      t.add_bias_rows(t.add(t.matmul(x, p.w[2]), t.matmul(t.mul(r, h), p.u[2])),
                      p.b[2]),
      Activation::tanh);
  // (1-z).h + z.cand
  return t.add(t.mul(t.affine(z, -1.0, 1.0), h), t.mul(z, cand));
}

inline Tensor plain_step(Tape& t, const Tensor& x, const Tensor& h,
                         const RecurrentCellParams& p) {
  if (p.kind != CellKind::plain)
    throw ContractError("layers: plain_step on non-plain cell");
  check_step_shapes("plain_step", x, h, p);
  return t.activation(gate_preact(t, x, h, p, 0), p.plain_act);
}

inline RnnState rnn_step(Tape& t, const Tensor& x, const RnnState& state,
                         const RecurrentCellParams& p) {
  switch (p.kind) {
    case CellKind::lstm: return lstm_step(t, x, state, p);
    case CellKind::gru: return {gru_step(t, x, state.h, p), state.c};
    case CellKind::plain: return {plain_step(t, x, state.h, p), state.c};
  }
  throw ConfigError("layers: unknown cell kind");
}

struct RnnRun {
  Tensor sequence;  // [batch*len x hidden], report-major, aligned to input positions
  Tensor last;      // [batch x hidden], final processed state
};

// Runs a cell over each report of a report-major batch with zero initial
// state. The backward direction consumes the reversed sequence and its
// outputs are re-reversed so row t always matches input position t.
inline RnnRun run_rnn(Tape& t, const Tensor& xs, std::int64_t batch,
                      std::int64_t len, const RecurrentCellParams& cell,
                      Direction dir) {
  if (len < 1) throw InputError("layers: run_rnn on empty sequence");
  if (xs.rank() != 2 || xs.rows() != batch * len)
    throw DimensionError("layers: run_rnn input " + shape_str(xs.shape()) +
                         " not [batch*len x d]");
  RnnState state{Tensor({batch, cell.hidden}), Tensor({batch, cell.hidden})};
  std::vector<Tensor> steps;
  steps.reserve(static_cast<std::size_t>(len));
  std::vector<std::int64_t> idx(static_cast<std::size_t>(batch));
  for (std::int64_t step = 0; step < len; ++step) {
    const std::int64_t pos = dir == Direction::forward ? step : len - 1 - step;
    for (std::int64_t b = 0; b < batch; ++b)
      idx[static_cast<std::size_t>(b)] = b * len + pos;
    Tensor x_t = t.gather_rows(xs, idx);
    state = rnn_step(t, x_t, state, cell);
    steps.push_back(state.h);
  }
  // steps[s] is [batch x H]; concatenating along axis 0 gives time-major
  // rows (s*batch + b); permute back to report-major aligned to positions.
  Tensor time_major = len == 1 ? steps[0] : t.concat(steps, 0);
  std::vector<std::int64_t> perm(static_cast<std::size_t>(batch * len));
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t pos = 0; pos < len; ++pos) {
      const std::int64_t step = dir == Direction::forward ? pos : len - 1 - pos;
      perm[static_cast<std::size_t>(b * len + pos)] = step * batch + b;
    }
  return {t.gather_rows(time_major, perm), state.h};
}

// Single-sequence view: x is [len x d], result [len x hidden].
inline Tensor run_rnn(Tape& t, const Tensor& x,
                      const RecurrentCellParams& cell, Direction dir) {
  return run_rnn(t, x, 1, x.rows(), cell, dir).sequence;
}

struct BiRnnRun {
  Tensor sequence;   // [batch*len x 2H]
  Tensor last_both;  // [batch x 2H]: final forward state ; final backward state
};

inline BiRnnRun birnn(Tape& t, const Tensor& xs, std::int64_t batch,
                      std::int64_t len, const RecurrentCellParams& fwd,
                      const RecurrentCellParams& bwd) {
  if (fwd.hidden != bwd.hidden)
    throw ConfigError("layers: birnn hidden sizes differ (" +
                      std::to_string(fwd.hidden) + " vs " +
                      std::to_string(bwd.hidden) + ")");
  RnnRun f = run_rnn(t, xs, batch, len, fwd, Direction::forward);
  RnnRun b = run_rnn(t, xs, batch, len, bwd, Direction::backward);
  return {t.concat({f.sequence, b.sequence}, 1),
          t.concat({f.last, b.last}, 1)};
}

inline Tensor birnn(Tape& t, const Tensor& x, const RecurrentCellParams& fwd,
                    const RecurrentCellParams& bwd) {
  return birnn(t, x, 1, x.rows(), fwd, bwd).sequence;
}

// ---- attention ----

struct AttentionParams {
  Tensor u;  // [h_dim x att_dim] projection
  Tensor b;  // [att_dim] projection bias
  Tensor z;  // [att_dim x 1] context vector scoring each projected state

  void visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".u", u);
    fn(prefix + ".b", b);
    fn(prefix + ".z", z);
  }
};

inline AttentionParams make_attention(std::int64_t h_dim, std::int64_t att_dim,
                                      std::mt19937_64& rng) {
  return {glorot_tensor({h_dim, att_dim}, h_dim, att_dim, rng),
          zeros_tensor({att_dim}),
          uniform_tensor({att_dim, 1}, -0.05, 0.05, rng)};
}

struct AttentionResult {
  Tensor context;  // [batch x h_dim]
  Tensor alpha;    // [batch x len]; exactly 0 at masked positions
};

// Soft attention over each report's timesteps: u_t = tanh(U h_t + b),
// score_t = u_t . z, alpha = softened softmax over unmasked positions,
// context = sum_t alpha_t h_t.
inline AttentionResult attention_pool(Tape& t, const Tensor& h,
                                      std::int64_t batch, std::int64_t len,
                                      const AttentionParams& p,
                                      const std::vector<std::uint8_t>& mask,
                                      double beta) {
  if (h.rank() != 2 || h.rows() != batch * len)
    throw DimensionError("layers: attention_pool input " +
                         shape_str(h.shape()) + " not [batch*len x d]");
  if (static_cast<std::int64_t>(mask.size()) != batch * len)
    throw DimensionError("layers: attention_pool mask size " +
                         std::to_string(mask.size()) + " != " +
                         std::to_string(batch * len));
  for (std::int64_t b = 0; b < batch; ++b) {
    bool any = false;
    for (std::int64_t i = 0; i < len && !any; ++i)
      any = mask[static_cast<std::size_t>(b * len + i)] != 0;
    if (!any)
      throw InputError("layers: attention_pool report " + std::to_string(b) +
                       " is fully masked");
  }
  Tensor proj = t.activation(t.add_bias_rows(t.matmul(h, p.u), p.b),
                             Activation::tanh);
  Tensor scores = t.reshape(t.matmul(proj, p.z), {batch, len});
  Tensor alpha = t.softmax_rows(scores, beta, mask);
  Tensor context = t.rows_weighted_sum(h, alpha);
  return {context, alpha};
}

inline AttentionResult attention_pool(Tape& t, const Tensor& h,
                                      const AttentionParams& p,
                                      const std::vector<std::uint8_t>& mask,
                                      double beta) {
  return attention_pool(t, h, 1, h.rows(), p, mask, beta);
}

// ---- dense ----

inline Tensor dense(Tape& t, const Tensor& x, const Tensor& weights,
                    const Tensor& bias, Activation act) {
  return t.activation(t.add_bias_rows(t.matmul(x, weights), bias), act);
}

}  // namespace harmnet
