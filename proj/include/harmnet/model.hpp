#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "harmnet/data.hpp"
#include "harmnet/error.hpp"
#include "harmnet/gradcheck.hpp"
#include "harmnet/layers.hpp"
#include "harmnet/tape.hpp"

namespace harmnet {

enum class ModelVariant {
  cnn,
  lstm,
  gru_cnn,
  bigru_cnn,
  lstm_cnn,
  bilstm_cnn,
  att_gru_cnn,
  att_bigru_cnn,
  att_lstm_cnn,
  att_bilstm_cnn,
};

inline const std::vector<std::pair<ModelVariant, std::string>>&
variant_names() {
  static const std::vector<std::pair<ModelVariant, std::string>> names = {
      {ModelVariant::cnn, "cnn"},
      {ModelVariant::lstm, "lstm"},
      {ModelVariant::gru_cnn, "gru_cnn"},
      {ModelVariant::bigru_cnn, "bigru_cnn"},
      {ModelVariant::lstm_cnn, "lstm_cnn"},
      {ModelVariant::bilstm_cnn, "bilstm_cnn"},
      {ModelVariant::att_gru_cnn, "att_gru_cnn"},
      {ModelVariant::att_bigru_cnn, "att_bigru_cnn"},
      {ModelVariant::att_lstm_cnn, "att_lstm_cnn"},
      {ModelVariant::att_bilstm_cnn, "att_bilstm_cnn"},
  };
  return names;
}

inline std::string variant_name(ModelVariant v) {
  for (const auto& [var, name] : variant_names())
    if (var == v) return name;
  throw ConfigError("model: unknown variant value");
}

inline std::string variant_list() {
  std::string out;
  for (const auto& [var, name] : variant_names()) {
    if (!out.empty()) out += ", ";
    out += name;
  }
  return out;
}

inline ModelVariant variant_by_name(const std::string& name) {
  for (const auto& [var, n] : variant_names())
    if (n == name) return var;
  throw ConfigError("model: unknown variant '" + name + "' (valid: " +
                    variant_list() + ")");
}

struct VariantTraits {
  bool conv = false;
  bool recurrent = false;
  CellKind kind = CellKind::plain;
  bool bidirectional = false;
  bool attentive = false;
};

inline VariantTraits variant_traits(ModelVariant v) {
  switch (v) {
    case ModelVariant::cnn:
      return {true, false, CellKind::plain, false, false};
    case ModelVariant::lstm:
      return {false, true, CellKind::lstm, false, false};
    case ModelVariant::gru_cnn:
      return {true, true, CellKind::gru, false, false};
    case ModelVariant::bigru_cnn:
      return {true, true, CellKind::gru, true, false};
    case ModelVariant::lstm_cnn:
      return {true, true, CellKind::lstm, false, false};
    case ModelVariant::bilstm_cnn:
      return {true, true, CellKind::lstm, true, false};
    case ModelVariant::att_gru_cnn:
      return {true, true, CellKind::gru, false, true};
    case ModelVariant::att_bigru_cnn:
      return {true, true, CellKind::gru, true, true};
    case ModelVariant::att_lstm_cnn:
      return {true, true, CellKind::lstm, false, true};
    case ModelVariant::att_bilstm_cnn:
      return {true, true, CellKind::lstm, true, true};
  }
  throw ConfigError("model: unknown variant value");
}

// Defaults follow the published hyperparameter choices: embedding 100,
// filters 2..5 with 128 channels, pooling 4, hidden 100, dropout 0.25
// after convolution, max sequence length 100.
struct ModelConfig {
  ModelVariant variant = ModelVariant::att_lstm_cnn;
  std::int64_t vocab_size = 0;
  std::int64_t embed_dim = 100;
  std::int64_t n_max = 100;
  std::vector<std::int64_t> filter_widths = {2, 3, 4, 5};
  std::int64_t channels = 128;
  std::int64_t pool_window = 4;
  std::int64_t hidden_size = 100;
  double dropout_rate = 0.25;
  int num_classes = 0;
  double beta = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab_size < 2)
      throw ConfigError("model: vocab_size must be >= 2 (pad + unk)");
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (embed_dim < 1 || hidden_size < 1 || n_max < 1 || pool_window < 1)
      throw ConfigError("model: dimensions must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("model: dropout_rate must be in [0,1)");
    if (beta <= 0.0) throw ConfigError("model: beta must be > 0");
    const VariantTraits t = variant_traits(variant);
    if (t.conv) {
      if (filter_widths.empty())
        throw ConfigError("model: conv variant needs filter widths");
      if (n_max < filter_widths.back())
        throw ConfigError("model: n_max shorter than widest filter");
      if (channels < 1) throw ConfigError("model: channels must be >= 1");
    }
  }

  std::int64_t conv_out_channels() const {
    return channels * static_cast<std::int64_t>(filter_widths.size());
  }

  std::int64_t pooled_len() const {
    return (n_max + pool_window - 1) / pool_window;
  }

  // width of the vector handed to the classifier head
  std::int64_t feature_dim() const {
    const VariantTraits t = variant_traits(variant);
    if (!t.recurrent) return conv_out_channels();
    if (!t.conv) return hidden_size;  // lstm baseline
    return t.bidirectional ? 2 * hidden_size : hidden_size;
  }
};

struct Prediction {
  int cls = 0;
  std::vector<double> probs;
  std::vector<double> alpha;  // pooled-position weights; empty unless attentive
};

struct ForwardResult {
  Tensor probs;          // [batch x num_classes]
  Tensor alpha;          // [batch x pooled_len] for attentive variants
  bool has_alpha = false;
  std::int64_t att_len = 0;  // attention positions per report
};

class HarmClassifier {
 public:
  static HarmClassifier build(const ModelConfig& config) {
    config.validate();
    HarmClassifier m;
    m.config_ = config;
    const VariantTraits t = variant_traits(config.variant);
    std::mt19937_64 rng(config.seed);
    m.embed_ = make_embedding(config.vocab_size, config.embed_dim, rng);
    if (t.conv)
      m.conv_ = make_conv_block(config.filter_widths, config.embed_dim,
                                config.channels, rng);
    if (t.recurrent) {
      const std::int64_t rnn_in =
          t.conv ? config.conv_out_channels() : config.embed_dim;
      m.cell_fwd_ = make_recurrent_cell(t.kind, rnn_in, config.hidden_size, rng);
      if (t.bidirectional)
        m.cell_bwd_ =
            make_recurrent_cell(t.kind, rnn_in, config.hidden_size, rng);
    }
    if (t.attentive) {
      const std::int64_t width = config.feature_dim();
      m.att_ = make_attention(width, width, rng);
    }
    m.dense_w_ = glorot_tensor({config.feature_dim(), config.num_classes},
                               config.feature_dim(), config.num_classes, rng);
    m.dense_b_ = zeros_tensor({config.num_classes});
    m.dropout_rng_.seed(config.seed ^ 0x9e3779b97f4a7c15ULL);
    return m;
  }

  const ModelConfig& config() const { return config_; }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  void visit_params(const ParamVisitor& fn) {
    const VariantTraits t = variant_traits(config_.variant);
    embed_.visit("embed", fn);
    if (t.conv) conv_.visit("conv", fn);
    if (t.recurrent) {
      cell_fwd_.visit(t.bidirectional ? "rnn.fwd" : "rnn", fn);
      if (t.bidirectional) cell_bwd_.visit("rnn.bwd", fn);
    }
    if (t.attentive) att_.visit("att", fn);
    fn("dense.w", dense_w_);
    fn("dense.b", dense_b_);
  }

  // deterministic order (the visit order)
  std::vector<std::pair<std::string, Tensor>> named_params() {
    std::vector<std::pair<std::string, Tensor>> out;
    visit_params([&](const std::string& name, Tensor& t) {
      out.emplace_back(name, t);
    });
    return out;
  }

  std::int64_t parameter_count() {
    std::int64_t n = 0;
    visit_params([&](const std::string&, Tensor& t) { n += t.size(); });
    return n;
  }

  // Deep snapshot of all parameter values.
  std::map<std::string, std::vector<double>> snapshot() {
    std::map<std::string, std::vector<double>> s;
    visit_params([&](const std::string& name, Tensor& t) {
      s[name] = t.values();
    });
    return s;
  }

  // Writes values back into the live tensors (storage identity preserved).
  void restore(const std::map<std::string, std::vector<double>>& s) {
    visit_params([&](const std::string& name, Tensor& t) {
      auto it = s.find(name);
      if (it == s.end() || it->second.size() != t.values().size())
        throw ContractError("model: snapshot does not match parameter " + name);
      t.values() = it->second;
    });
  }

  ForwardResult forward(Tape& tape, const std::vector<EncodedReport>& batch) {
    if (batch.empty()) throw ContractError("model: forward on empty batch");
    const std::int64_t bsz = static_cast<std::int64_t>(batch.size());
    const std::int64_t n = config_.n_max;
    std::vector<std::int64_t> ids;
    ids.reserve(static_cast<std::size_t>(bsz * n));
    for (const auto& r : batch) {
      if (static_cast<std::int64_t>(r.ids.size()) != n ||
          static_cast<std::int64_t>(r.mask.size()) != n)
        throw ContractError("model: report encoded to " +
                            std::to_string(r.ids.size()) + " ids, expected " +
                            std::to_string(n));
      ids.insert(ids.end(), r.ids.begin(), r.ids.end());
    }
    const VariantTraits t = variant_traits(config_.variant);

    // bind parameters as leaves; layer structs with shared storage
    HarmClassifier bound = *this;
    bound.visit_params([&](const std::string& name, Tensor& p) {
      p = tape.leaf(p, name);
    });

    Tensor x = tape.embed_rows(bound.embed_.table, ids);  // [B*n x d]
    ForwardResult res;
    Tensor feature;  // [B x feature_dim]

    if (!t.conv) {  // lstm baseline: embeddings straight into the cell
      feature = run_rnn(tape, x, bsz, n, bound.cell_fwd_, Direction::forward)
                    .last;
    } else {
      Tensor conv = conv1d_multi(tape, x, bsz, n, bound.conv_);
      const std::int64_t pooled = config_.pooled_len();
      Tensor seq = tape.max_pool(conv, bsz, n, config_.pool_window);
      if (!t.recurrent) {  // cnn baseline: global max over time
        feature = tape.max_pool(seq, bsz, pooled, pooled);
      } else {
        seq = tape.dropout(seq, config_.dropout_rate, dropout_rng_, training_);
        if (t.attentive) {
          Tensor hs;
          if (t.bidirectional)
            hs = birnn(tape, seq, bsz, pooled, bound.cell_fwd_,
                       bound.cell_bwd_)
                     .sequence;
          else
            hs = run_rnn(tape, seq, bsz, pooled, bound.cell_fwd_,
                         Direction::forward)
                     .sequence;
          auto att = attention_pool(tape, hs, bsz, pooled, bound.att_,
                                    pooled_mask(batch), config_.beta);
          feature = att.context;
          res.alpha = att.alpha;
          res.has_alpha = true;
          res.att_len = pooled;
        } else if (t.bidirectional) {
          feature = birnn(tape, seq, bsz, pooled, bound.cell_fwd_,
                          bound.cell_bwd_)
                        .last_both;
        } else {
          feature = run_rnn(tape, seq, bsz, pooled, bound.cell_fwd_,
                            Direction::forward)
                        .last;
        }
      }
    }
    Tensor logits =
        dense(tape, feature, bound.dense_w_, bound.dense_b_, Activation::none);
    res.probs = tape.softmax_rows(logits, 1.0);
    return res;
  }

  // Mean cross-entropy with probabilities floored at 1e-12 before the log.
  static Tensor loss(Tape& tape, const Tensor& probs,
                     const std::vector<int>& labels) {
    return tape.nll_mean(probs, labels, 1e-12);
  }

  // Inference-mode predictions; ties break toward the lower class index.
  std::vector<Prediction> predict(const std::vector<EncodedReport>& batch) {
    const bool was_training = training_;
    training_ = false;
    Tape tape;
    ForwardResult fr = forward(tape, batch);
    training_ = was_training;
    std::vector<Prediction> out;
    const std::int64_t c = config_.num_classes;
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(batch.size()); ++b) {
      Prediction p;
      p.probs.resize(static_cast<std::size_t>(c));
      for (std::int64_t j = 0; j < c; ++j) {
        p.probs[static_cast<std::size_t>(j)] = fr.probs.at(b, j);
        if (fr.probs.at(b, j) > p.probs[static_cast<std::size_t>(p.cls)])
          p.cls = static_cast<int>(j);
      }
      if (fr.has_alpha) {
        p.alpha.resize(static_cast<std::size_t>(fr.att_len));
        for (std::int64_t j = 0; j < fr.att_len; ++j)
          p.alpha[static_cast<std::size_t>(j)] = fr.alpha.at(b, j);
      }
      out.push_back(std::move(p));
    }
    return out;
  }

  // Attention operates over pooled positions; a pooled position is real if
  // any token position in its window is real.
  std::vector<std::uint8_t> pooled_mask(
      const std::vector<EncodedReport>& batch) const {
    const std::int64_t n = config_.n_max;
    const std::int64_t w = config_.pool_window;
    const std::int64_t pooled = config_.pooled_len();
    std::vector<std::uint8_t> out(batch.size() * static_cast<std::size_t>(pooled),
                                  0);
    for (std::size_t b = 0; b < batch.size(); ++b)
      for (std::int64_t p = 0; p < pooled; ++p) {
        std::uint8_t any = 0;
        for (std::int64_t t = p * w; t < std::min(n, (p + 1) * w); ++t)
          any |= batch[b].mask[static_cast<std::size_t>(t)];
        out[b * static_cast<std::size_t>(pooled) +
            static_cast<std::size_t>(p)] = any;
      }
    return out;
  }

 private:
  ModelConfig config_;
  EmbeddingTable embed_;
  ConvBlockParams conv_;
  RecurrentCellParams cell_fwd_;
  RecurrentCellParams cell_bwd_;
  AttentionParams att_;
  Tensor dense_w_;
  Tensor dense_b_;
  bool training_ = false;
  std::mt19937_64 dropout_rng_;
};

// Builds a scaled-down instance of the variant and checks every parameter
// gradient against central differences on a small fixed batch.
inline GradCheckResult gradcheck_variant(ModelVariant variant,
                                         std::uint64_t seed) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.vocab_size = 20;
  cfg.embed_dim = 8;
  cfg.n_max = 12;
  cfg.filter_widths = {2, 3};
  cfg.channels = 4;
  cfg.pool_window = 4;
  cfg.hidden_size = 8;
  cfg.dropout_rate = 0.0;  // deterministic objective
  cfg.num_classes = 3;
  cfg.seed = seed;
  HarmClassifier model = HarmClassifier::build(cfg);
  model.set_training(false);

  std::mt19937_64 rng(seed + 1);
  std::vector<EncodedReport> batch(2);
  std::vector<int> labels = {0, 2};
  for (std::size_t b = 0; b < batch.size(); ++b) {
    batch[b].ids.assign(static_cast<std::size_t>(cfg.n_max), 0);
    batch[b].mask.assign(static_cast<std::size_t>(cfg.n_max), 0);
    const std::size_t real = 5 + b * 4;
    for (std::size_t t = 0; t < real; ++t) {
      batch[b].ids[t] = 2 + static_cast<std::int64_t>(
                                rng() % static_cast<std::uint64_t>(
                                            cfg.vocab_size - 2));
      batch[b].mask[t] = 1;
    }
    batch[b].label = labels[b];
  }

  auto objective = [&](Tape& tape) {
    ForwardResult fr = model.forward(tape, batch);
    return HarmClassifier::loss(tape, fr.probs, labels);
  };
  return finite_diff_check(objective, model.named_params(), 1e-4);
}

}  // namespace harmnet
