#pragma once

#include "json.hpp"

#include <string>

#include "cdmt/corpus/vocab.hpp"
#include "cdmt/model/transformer.hpp"
#include "cdmt/tensor/checkpoint.hpp"

namespace cdmt {

template <typename T>
struct LoadedModel {
  Transformer<T> model;
  Vocab src_vocab, tgt_vocab;
  nlohmann::json header;
};

inline nlohmann::json model_header(const ModelConfig& cfg, const Vocab& src, const Vocab& tgt,
                                   const nlohmann::json& meta = nlohmann::json::object()) {
  return {{"kind", "model"},
          {"config", cfg.to_json()},
          {"src_vocab", src.tokens()},
          {"tgt_vocab", tgt.tokens()},
          {"src_vocab_digest", src.digest()},
          {"tgt_vocab_digest", tgt.digest()},
          {"meta", meta}};
}

template <typename T>
std::string encode_model(const Transformer<T>& m, const Vocab& src, const Vocab& tgt,
                         const nlohmann::json& meta = nlohmann::json::object()) {
  if (src.size() != m.config().src_vocab || tgt.size() != m.config().tgt_vocab)
    throw ModelError("vocabulary sizes do not match the model config");
  const auto ps = m.parameters();
  return encode_checkpoint<T>(model_header(m.config(), src, tgt, meta).dump(), ps);
}

template <typename T>
void save_model(const std::string& path, const Transformer<T>& m, const Vocab& src, const Vocab& tgt,
                const nlohmann::json& meta = nlohmann::json::object()) {
  const auto ps = m.parameters();
  if (src.size() != m.config().src_vocab || tgt.size() != m.config().tgt_vocab)
    throw ModelError("vocabulary sizes do not match the model config");
  save_checkpoint<T>(path, model_header(m.config(), src, tgt, meta).dump(), ps);
}

template <typename T>
LoadedModel<T> model_from_checkpoint(const Checkpoint& ck) {
  LoadedModel<T> out;
  try {
    out.header = nlohmann::json::parse(ck.header);
    const auto cfg = ModelConfig::from_json(out.header.at("config"));
    out.src_vocab = Vocab::from_tokens(out.header.at("src_vocab").template get<std::vector<std::string>>());
    out.tgt_vocab = Vocab::from_tokens(out.header.at("tgt_vocab").template get<std::vector<std::string>>());
    if (out.src_vocab.size() != cfg.src_vocab || out.tgt_vocab.size() != cfg.tgt_vocab)
      throw ModelError("checkpoint vocabularies disagree with its model config");
    out.model = Transformer<T>(cfg, 0);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("bad checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ModelError(std::string("bad checkpoint header: ") + e.what());
  }
  auto ps = out.model.parameters();
  assign_parameters<T>(ck, ps);
  return out;
}

template <typename T>
LoadedModel<T> load_model(const std::string& path) {
  return model_from_checkpoint<T>(load_checkpoint(path));
}

}  // namespace cdmt
