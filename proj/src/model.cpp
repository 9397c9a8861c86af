#include "ked/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <json.hpp>

#include "ked/rng.hpp"

namespace ked {

using Json = nlohmann::json;

void ModelConfig::validate() const {
  if (input_len < 2 || input_len % 2 != 0) {
    throw ConfigError("ModelConfig: input_len must be even and >= 2");
  }
  if (horizon < 1) throw ConfigError("ModelConfig: horizon must be positive");
  if (feature_dim < 1) throw ConfigError("ModelConfig: feature_dim must be positive");
  if (d_model < 1) throw ConfigError("ModelConfig: d_model must be positive");
  if (enc_layers < 1 || dec_layers < 1) {
    throw ConfigError("ModelConfig: at least one encoder and one decoder layer");
  }
  if (ma_kernel < 1 || ma_kernel % 2 == 0) {
    throw ConfigError("ModelConfig: ma_kernel must be odd and positive");
  }
  for (const AttentionConfig* a : {&self_enc, &self_dec, &cross_dec}) {
    if (a->heads < 1 || d_model % a->heads != 0) {
      throw ConfigError("ModelConfig: d_model must be divisible by heads");
    }
    if (a->factor_c <= 0.0) throw ConfigError("ModelConfig: factor_c must be positive");
  }
}

AttentionLayout configure_ablation(AblationVariant variant) {
  switch (variant) {
    case AblationVariant::KEDformer:
      return {AttentionVariant::KEDatt, AttentionVariant::KEDatt};
    case AblationVariant::V1:
      return {AttentionVariant::KEDatt, AttentionVariant::KEDatt_f};
    case AblationVariant::V2:
      return {AttentionVariant::KEDatt_f, AttentionVariant::KEDatt_f};
  }
  throw ConfigError("configure_ablation: unknown variant");
}

void apply_ablation(ModelConfig& cfg, AblationVariant variant) {
  const AttentionLayout layout = configure_ablation(variant);
  cfg.self_enc.variant = layout.self_attention;
  cfg.self_dec.variant = layout.self_attention;
  cfg.cross_dec.variant = layout.cross_attention;
}

AblationVariant parse_ablation(const std::string& name) {
  if (name == "KEDformer") return AblationVariant::KEDformer;
  if (name == "V1") return AblationVariant::V1;
  if (name == "V2") return AblationVariant::V2;
  throw ConfigError("unknown variant '" + name + "' (KEDformer|V1|V2)");
}

std::string ablation_name(AblationVariant variant) {
  switch (variant) {
    case AblationVariant::KEDformer: return "KEDformer";
    case AblationVariant::V1: return "V1";
    case AblationVariant::V2: return "V2";
  }
  return "?";
}

namespace {

// Builds the parameter structure in exactly the order visit() walks it.
// `make(name, shape, fan_in)` produces each slot.
template <typename T, typename F>
ModelParamsT<T> build_params(const ModelConfig& cfg, F&& make) {
  const Index D = cfg.feature_dim;
  const Index dm = cfg.d_model;
  const Index ffh = cfg.ff_dim();
  ModelParamsT<T> p;
  p.enc_embed_w = make("enc_embed.w", std::vector<Index>{D, dm}, D);
  p.enc_embed_b = make("enc_embed.b", std::vector<Index>{dm}, D);
  p.dec_embed_w = make("dec_embed.w", std::vector<Index>{D, dm}, D);
  p.dec_embed_b = make("dec_embed.b", std::vector<Index>{dm}, D);
  auto attention = [&](const std::string& prefix) {
    AttentionParamsT<T> a;
    a.wq = make(prefix + ".wq", std::vector<Index>{dm, dm}, dm);
    a.wk = make(prefix + ".wk", std::vector<Index>{dm, dm}, dm);
    a.wv = make(prefix + ".wv", std::vector<Index>{dm, dm}, dm);
    a.wo = make(prefix + ".wo", std::vector<Index>{dm, dm}, dm);
    return a;
  };
  auto feed_forward = [&](const std::string& prefix) {
    FeedForwardParamsT<T> f;
    f.w1 = make(prefix + ".w1", std::vector<Index>{dm, ffh}, dm);
    f.b1 = make(prefix + ".b1", std::vector<Index>{ffh}, dm);
    f.w2 = make(prefix + ".w2", std::vector<Index>{ffh, dm}, ffh);
    f.b2 = make(prefix + ".b2", std::vector<Index>{dm}, ffh);
    return f;
  };
  for (Index l = 0; l < cfg.enc_layers; ++l) {
    const std::string prefix = "enc" + std::to_string(l);
    EncoderLayerT<T> layer;
    layer.self_attn = attention(prefix + ".self");
    layer.ff = feed_forward(prefix + ".ff");
    p.encoder.push_back(std::move(layer));
  }
  for (Index l = 0; l < cfg.dec_layers; ++l) {
    const std::string prefix = "dec" + std::to_string(l);
    DecoderLayerT<T> layer;
    layer.self_attn = attention(prefix + ".self");
    layer.cross_attn = attention(prefix + ".cross");
    layer.ff = feed_forward(prefix + ".ff");
    for (int i = 0; i < 3; ++i) {
      layer.w_trend[i] = make(prefix + ".w_trend" + std::to_string(i + 1),
                              std::vector<Index>{dm, D}, dm);
    }
    p.decoder.push_back(std::move(layer));
  }
  p.out_w = make("out.w", std::vector<Index>{dm, D}, dm);
  p.out_b = make("out.b", std::vector<Index>{D}, dm);
  return p;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 gen(seed);
  return build_params<Tensor>(
      cfg, [&gen](const std::string&, std::vector<Index> shape, Index fan_in) {
        Tensor t(std::move(shape));
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (Index i = 0; i < t.numel(); ++i) {
          t(i) = rng::uniform(gen, -bound, bound);
        }
        return t;
      });
}

ModelParams zero_params(const ModelConfig& cfg) {
  cfg.validate();
  return build_params<Tensor>(
      cfg, [](const std::string&, std::vector<Index> shape, Index) {
        return Tensor::zeros(std::move(shape));
      });
}

Index param_count(const ModelConfig& cfg) {
  ModelParams p = zero_params(cfg);
  Index n = 0;
  p.visit([&n](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

std::vector<std::pair<std::string, Tensor*>> named_tensors(ModelParams& params) {
  std::vector<std::pair<std::string, Tensor*>> out;
  params.visit([&out](const std::string& name, Tensor& t) {
    out.emplace_back(name, &t);
  });
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> named_tensors(
    const ModelParams& params) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  const_cast<ModelParams&>(params).visit(
      [&out](const std::string& name, Tensor& t) {
        out.emplace_back(name, const_cast<const Tensor*>(&t));
      });
  return out;
}

ParamVars lift_params(ag::Tape& tape, const ModelParams& params) {
  std::vector<ag::Var> flat;
  for (const auto& [name, tensor] : named_tensors(params)) {
    flat.push_back(tape.leaf(*tensor));
  }
  ModelConfig cfg;  // only the structural fields matter for assembly
  cfg.feature_dim = params.enc_embed_w.rows();
  cfg.d_model = params.enc_embed_w.cols();
  cfg.enc_layers = static_cast<Index>(params.encoder.size());
  cfg.dec_layers = static_cast<Index>(params.decoder.size());
  cfg.ff_hidden = params.encoder.empty() ? 0 : params.encoder[0].ff.b1.numel();
  std::size_t next = 0;
  return build_params<ag::Var>(
      cfg, [&flat, &next](const std::string&, std::vector<Index>, Index) {
        return flat.at(next++);
      });
}

std::vector<ag::Var> flatten_vars(ParamVars& vars) {
  std::vector<ag::Var> out;
  vars.visit([&out](const std::string&, ag::Var& v) { out.push_back(v); });
  return out;
}

ParamVars assemble_params(const ModelConfig& cfg, const std::vector<ag::Var>& flat) {
  std::size_t next = 0;
  ParamVars out = build_params<ag::Var>(
      cfg, [&flat, &next](const std::string& name, std::vector<Index> shape, Index) {
        if (next >= flat.size()) {
          throw ConfigError("assemble_params: too few leaves");
        }
        ag::Var v = flat[next++];
        if (v.value().shape() != shape) {
          throw ConfigError("assemble_params: shape mismatch at " + name);
        }
        return v;
      });
  if (next != flat.size()) throw ConfigError("assemble_params: too many leaves");
  return out;
}

Tensor positional_encoding(Index len, Index d_model) {
  Tensor pe({len, d_model});
  for (Index pos = 0; pos < len; ++pos) {
    for (Index i = 0; i < d_model; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / d_model;
      const double angle = pos / std::pow(10000.0, exponent);
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

std::pair<Tensor, Tensor> init_decoder_inputs(const Tensor& x_en,
                                              const ModelConfig& cfg) {
  if (cfg.input_len % 2 != 0) {
    throw ConfigError("init_decoder_inputs: input_len must be even");
  }
  if (x_en.rank() != 2 || x_en.rows() != cfg.input_len ||
      x_en.cols() != cfg.feature_dim) {
    throw DimensionError("init_decoder_inputs: input must be [I x D]");
  }
  const Index I = cfg.input_len;
  const Index O = cfg.horizon;
  const Index D = cfg.feature_dim;
  const Tensor tail = slice_rows(x_en, I / 2, I);
  const DecompPair dp = mstw_decompose(tail, cfg.ma_kernel);
  const Tensor mean = col_mean(x_en);
  Tensor mean_block({O, D});
  for (Index r = 0; r < O; ++r) {
    for (Index c = 0; c < D; ++c) mean_block(r, c) = mean(c);
  }
  Tensor x_des = concat_rows(dp.seasonal, Tensor::zeros({O, D}));
  Tensor x_det = concat_rows(dp.trend, mean_block);
  return {std::move(x_des), std::move(x_det)};
}

namespace {

ag::Var linear(ag::Var x, ag::Var w, ag::Var b) {
  return ag::add_row_bias(ag::matmul(x, w), b);
}

ag::Var feed_forward(ag::Var x, const FeedForwardParamsT<ag::Var>& p) {
  return linear(ag::relu(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

ag::Var attention_block(ag::Var xq, ag::Var xkv,
                        const AttentionParamsT<ag::Var>& p,
                        const AttentionConfig& acfg) {
  ag::Var q = ag::matmul(xq, p.wq);
  ag::Var k = ag::matmul(xkv, p.wk);
  ag::Var v = ag::matmul(xkv, p.wv);
  return ag::keda_attention(q, k, v, p.wo, acfg);
}

/// Truncates or zero-pads rows to `target` for the cross-attention stream.
ag::Var resize_rows(ag::Tape& tape, ag::Var x, Index target) {
  const Index L = x.value().rows();
  if (L == target) return x;
  if (L > target) return ag::slice_rows(x, 0, target);
  return ag::concat_rows(
      x, tape.constant(Tensor::zeros({target - L, x.value().cols()})));
}

[[noreturn]] void rethrow_with_context(const NumericError& e,
                                       const std::string& where) {
  throw NumericError(where + ": " + e.what());
}

}  // namespace

ag::Var encoder_layer(ag::Var x, const EncoderLayerT<ag::Var>& p,
                      const ModelConfig& cfg) {
  ag::Var attn = attention_block(x, x, p.self_attn, cfg.self_enc);
  ag::Var s1 = ag::mstw_decompose(ag::add(attn, x), cfg.ma_kernel).seasonal;
  ag::Var ff = feed_forward(s1, p.ff);
  ag::Var s2 = ag::mstw_decompose(ag::add(ff, s1), cfg.ma_kernel).seasonal;
  return s2;
}

DecoderLayerOut decoder_layer(ag::Var x, ag::Var enc_out,
                              const DecoderLayerT<ag::Var>& p,
                              const ModelConfig& cfg) {
  ag::Tape& tape = *x.tape();
  ag::Var self_attn = attention_block(x, x, p.self_attn, cfg.self_dec);
  ag::DecompVars d1 = ag::mstw_decompose(ag::add(self_attn, x), cfg.ma_kernel);

  ag::Var kv = resize_rows(tape, enc_out, x.value().rows());
  ag::Var cross = attention_block(d1.seasonal, kv, p.cross_attn, cfg.cross_dec);
  ag::DecompVars d2 =
      ag::mstw_decompose(ag::add(cross, d1.seasonal), cfg.ma_kernel);

  ag::Var ff = feed_forward(d2.seasonal, p.ff);
  ag::DecompVars d3 = ag::mstw_decompose(ag::add(ff, d2.seasonal), cfg.ma_kernel);

  DecoderLayerOut out;
  out.seasonal = d3.seasonal;
  out.trend_contribs = {ag::matmul(d1.trend, p.w_trend[0]),
                        ag::matmul(d2.trend, p.w_trend[1]),
                        ag::matmul(d3.trend, p.w_trend[2])};
  return out;
}

ag::Var forward_on_tape(ag::Tape& tape, const ParamVars& params,
                        const Tensor& x_en, const ModelConfig& cfg) {
  cfg.validate();
  if (x_en.rank() != 2 || x_en.rows() != cfg.input_len ||
      x_en.cols() != cfg.feature_dim) {
    throw DimensionError("forward: input must be [I x D], got " + x_en.shape_str());
  }
  ensure_finite(x_en, "forward input");
  const auto [x_des, x_det] = init_decoder_inputs(x_en, cfg);

  ag::Var enc = linear(tape.constant(x_en), params.enc_embed_w, params.enc_embed_b);
  enc = ag::add(enc, tape.constant(positional_encoding(cfg.input_len, cfg.d_model)));
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    try {
      enc = encoder_layer(enc, params.encoder[l], cfg);
    } catch (const NumericError& e) {
      rethrow_with_context(e, "encoder layer " + std::to_string(l));
    }
  }

  ag::Var dec = linear(tape.constant(x_des), params.dec_embed_w, params.dec_embed_b);
  dec = ag::add(dec,
                tape.constant(positional_encoding(cfg.decoder_len(), cfg.d_model)));
  ag::Var trend = tape.constant(x_det);
  for (std::size_t l = 0; l < params.decoder.size(); ++l) {
    try {
      DecoderLayerOut out = decoder_layer(dec, enc, params.decoder[l], cfg);
      dec = out.seasonal;
      for (const ag::Var& contrib : out.trend_contribs) {
        trend = ag::add(trend, contrib);
      }
    } catch (const NumericError& e) {
      rethrow_with_context(e, "decoder layer " + std::to_string(l));
    }
  }

  ag::Var full = ag::add(linear(dec, params.out_w, params.out_b), trend);
  const Index L = cfg.decoder_len();
  return ag::slice_rows(full, L - cfg.horizon, L);
}

Tensor forward(const Tensor& x_en, const ModelParams& params,
               const ModelConfig& cfg) {
  ag::Tape tape;
  ParamVars vars = lift_params(tape, params);
  return forward_on_tape(tape, vars, x_en, cfg).value();
}

namespace {

std::string variant_name(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::KEDatt: return "KEDatt";
    case AttentionVariant::KEDatt_f: return "KEDatt-f";
    case AttentionVariant::Canonical: return "Canonical";
  }
  return "?";
}

AttentionVariant variant_from_name(const std::string& s) {
  if (s == "KEDatt") return AttentionVariant::KEDatt;
  if (s == "KEDatt-f") return AttentionVariant::KEDatt_f;
  if (s == "Canonical") return AttentionVariant::Canonical;
  throw ConfigError("unknown attention variant '" + s + "'");
}

Json attention_to_json(const AttentionConfig& a) {
  return Json{{"factor_c", a.factor_c},
              {"heads", a.heads},
              {"variant", variant_name(a.variant)}};
}

AttentionConfig attention_from_json(const Json& j) {
  AttentionConfig a;
  a.factor_c = j.at("factor_c").get<double>();
  a.heads = j.at("heads").get<int>();
  a.variant = variant_from_name(j.at("variant").get<std::string>());
  return a;
}

}  // namespace

Json model_config_to_json(const ModelConfig& cfg) {
  return Json{{"input_len", cfg.input_len},
              {"horizon", cfg.horizon},
              {"feature_dim", cfg.feature_dim},
              {"d_model", cfg.d_model},
              {"enc_layers", cfg.enc_layers},
              {"dec_layers", cfg.dec_layers},
              {"ma_kernel", cfg.ma_kernel},
              {"ff_hidden", cfg.ff_hidden},
              {"self_enc", attention_to_json(cfg.self_enc)},
              {"self_dec", attention_to_json(cfg.self_dec)},
              {"cross_dec", attention_to_json(cfg.cross_dec)}};
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig cfg;
  cfg.input_len = j.at("input_len").get<Index>();
  cfg.horizon = j.at("horizon").get<Index>();
  cfg.feature_dim = j.at("feature_dim").get<Index>();
  cfg.d_model = j.at("d_model").get<Index>();
  cfg.enc_layers = j.at("enc_layers").get<Index>();
  cfg.dec_layers = j.at("dec_layers").get<Index>();
  cfg.ma_kernel = j.at("ma_kernel").get<int>();
  cfg.ff_hidden = j.at("ff_hidden").get<Index>();
  cfg.self_enc = attention_from_json(j.at("self_enc"));
  cfg.self_dec = attention_from_json(j.at("self_dec"));
  cfg.cross_dec = attention_from_json(j.at("cross_dec"));
  return cfg;
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelParams& params, std::uint64_t seed) {
  Json j;
  j["format"] = "kedformer-checkpoint";
  j["version"] = 1;
  j["seed"] = seed;
  j["config"] = model_config_to_json(cfg);
  Json jp = Json::object();
  for (const auto& [name, tensor] : named_tensors(params)) {
    Json entry;
    entry["shape"] = tensor->shape();
    std::vector<double> data(tensor->flat().data(),
                             tensor->flat().data() + tensor->numel());
    entry["data"] = std::move(data);
    jp[name] = std::move(entry);
  }
  j["params"] = std::move(jp);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint to " + path);
  out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint from " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw DataError("malformed checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != "kedformer-checkpoint") {
    throw ConfigError("incompatible checkpoint: wrong format tag in " + path);
  }
  Checkpoint ck;
  ck.seed = j.at("seed").get<std::uint64_t>();
  ck.config = model_config_from_json(j.at("config"));
  ck.params = zero_params(ck.config);
  const Json& jp = j.at("params");
  for (auto& [name, tensor] : named_tensors(ck.params)) {
    if (!jp.contains(name)) {
      throw ConfigError("incompatible checkpoint: missing parameter " + name);
    }
    const Json& entry = jp.at(name);
    const auto shape = entry.at("shape").get<std::vector<Index>>();
    if (shape != tensor->shape()) {
      throw ConfigError("incompatible checkpoint: shape mismatch at " + name);
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != tensor->numel()) {
      throw ConfigError("incompatible checkpoint: size mismatch at " + name);
    }
    for (Index i = 0; i < tensor->numel(); ++i) (*tensor)(i) = data[i];
  }
  return ck;
}

}  // namespace ked
