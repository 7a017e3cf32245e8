#pragma once

#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "harmnet/io.hpp"
#include "harmnet/model.hpp"

namespace harmnet {

inline json model_config_to_json(const ModelConfig& c) {
  return json{{"variant", variant_name(c.variant)},
              {"vocab_size", c.vocab_size},
              {"embed_dim", c.embed_dim},
              {"n_max", c.n_max},
              {"filter_widths", c.filter_widths},
              {"channels", c.channels},
              {"pool_window", c.pool_window},
              {"hidden_size", c.hidden_size},
              {"dropout_rate", c.dropout_rate},
              {"num_classes", c.num_classes},
              {"beta", c.beta},
              {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.variant = variant_by_name(j.at("variant").get<std::string>());
  c.vocab_size = j.at("vocab_size").get<std::int64_t>();
  c.embed_dim = j.at("embed_dim").get<std::int64_t>();
  c.n_max = j.at("n_max").get<std::int64_t>();
  c.filter_widths = j.at("filter_widths").get<std::vector<std::int64_t>>();
  c.channels = j.at("channels").get<std::int64_t>();
  c.pool_window = j.at("pool_window").get<std::int64_t>();
  c.hidden_size = j.at("hidden_size").get<std::int64_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.num_classes = j.at("num_classes").get<int>();
  c.beta = j.at("beta").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// Self-describing container: config, named parameter tensors, vocabulary
// hash, and the schema class names used at training time. JSON doubles are
// emitted with shortest round-trip formatting, so load(save(m)) reproduces
// forward outputs bitwise.
inline std::string checkpoint_to_json(HarmClassifier& model,
                                      const std::string& vocab_hash,
                                      const std::string& schema_name,
                                      int chosen_epoch = -1) {
  json params = json::object();
  model.visit_params([&](const std::string& name, Tensor& t) {
    params[name] = json{{"shape", t.shape()}, {"values", t.values()}};
  });
  json j = {{"format", "harmnet-checkpoint"},
            {"version", 1},
            {"config", model_config_to_json(model.config())},
            {"schema", schema_name},
            {"vocab_hash", vocab_hash},
            {"chosen_epoch", chosen_epoch},
            {"params", params}};
  return j.dump(2) + "\n";
}

struct LoadedCheckpoint {
  HarmClassifier model;
  std::string vocab_hash;
  std::string schema_name;
  int chosen_epoch = -1;
};

inline LoadedCheckpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("model: bad checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "harmnet-checkpoint")
    throw DataError("model: not a harmnet checkpoint");
  LoadedCheckpoint out{
      HarmClassifier::build(model_config_from_json(j.at("config"))),
      j.value("vocab_hash", ""), j.value("schema", ""),
      j.value("chosen_epoch", -1)};
  const json& params = j.at("params");
  out.model.visit_params([&](const std::string& name, Tensor& t) {
    if (!params.contains(name))
      throw DataError("model: checkpoint missing parameter " + name);
    const json& p = params.at(name);
    const auto shape = p.at("shape").get<Shape>();
    if (shape != t.shape())
      throw DataError("model: checkpoint shape mismatch for " + name);
    auto values = p.at("values").get<std::vector<double>>();
    if (values.size() != t.values().size())
      throw DataError("model: checkpoint size mismatch for " + name);
    t.values() = std::move(values);
  });
  return out;
}

inline void save_checkpoint(HarmClassifier& model, const std::string& vocab_hash,
                            const std::string& schema_name,
                            const std::string& path, int chosen_epoch = -1) {
  write_file_atomic(
      path, checkpoint_to_json(model, vocab_hash, schema_name, chosen_epoch));
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(read_file(path));
}

}  // namespace harmnet
