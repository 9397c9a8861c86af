#ifndef KED_MODEL_HPP
#define KED_MODEL_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ked/attention.hpp"
#include "ked/autodiff.hpp"
#include "ked/decomp.hpp"
#include "ked/tensor.hpp"

namespace ked {

struct ModelConfig {
  Index input_len = 96;    ///< I; must be even (the decoder seeds from I/2)
  Index horizon = 24;      ///< O
  Index feature_dim = 1;   ///< D
  Index d_model = 64;
  Index enc_layers = 1;
  Index dec_layers = 1;
  int ma_kernel = 25;      ///< moving-average window, odd
  Index ff_hidden = 0;     ///< 0 selects 4 * d_model
  AttentionConfig self_enc;
  AttentionConfig self_dec;
  AttentionConfig cross_dec;

  Index ff_dim() const { return ff_hidden > 0 ? ff_hidden : 4 * d_model; }
  Index decoder_len() const { return input_len / 2 + horizon; }
  void validate() const;
};

enum class AblationVariant { KEDformer, V1, V2 };

/// Attention variants per position for an ablation row.
struct AttentionLayout {
  AttentionVariant self_attention;
  AttentionVariant cross_attention;
};

/// KEDformer -> (KEDatt, KEDatt); V1 -> (KEDatt, KEDatt_f);
/// V2 -> (KEDatt_f, KEDatt_f).
AttentionLayout configure_ablation(AblationVariant variant);
void apply_ablation(ModelConfig& cfg, AblationVariant variant);
AblationVariant parse_ablation(const std::string& name);
std::string ablation_name(AblationVariant variant);

// ---- parameters ----
// The same structure is instantiated with Tensor for storage and with ag::Var
// for a tape-bound view; slot order is fixed by visit() and shared by
// initialization, the optimizer, checkpoints, and gradient collection.

template <typename T>
struct AttentionParamsT {
  T wq, wk, wv, wo;
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".wq", wq);
    f(prefix + ".wk", wk);
    f(prefix + ".wv", wv);
    f(prefix + ".wo", wo);
  }
};

template <typename T>
struct FeedForwardParamsT {
  T w1, b1, w2, b2;
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w1", w1);
    f(prefix + ".b1", b1);
    f(prefix + ".w2", w2);
    f(prefix + ".b2", b2);
  }
};

template <typename T>
struct EncoderLayerT {
  AttentionParamsT<T> self_attn;
  FeedForwardParamsT<T> ff;
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    self_attn.visit(prefix + ".self", f);
    ff.visit(prefix + ".ff", f);
  }
};

template <typename T>
struct DecoderLayerT {
  AttentionParamsT<T> self_attn;
  AttentionParamsT<T> cross_attn;
  FeedForwardParamsT<T> ff;
  std::array<T, 3> w_trend;
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    self_attn.visit(prefix + ".self", f);
    cross_attn.visit(prefix + ".cross", f);
    ff.visit(prefix + ".ff", f);
    f(prefix + ".w_trend1", w_trend[0]);
    f(prefix + ".w_trend2", w_trend[1]);
    f(prefix + ".w_trend3", w_trend[2]);
  }
};

template <typename T>
struct ModelParamsT {
  T enc_embed_w, enc_embed_b;
  T dec_embed_w, dec_embed_b;
  std::vector<EncoderLayerT<T>> encoder;
  std::vector<DecoderLayerT<T>> decoder;
  T out_w, out_b;
  template <typename F>
  void visit(F&& f) {
    f("enc_embed.w", enc_embed_w);
    f("enc_embed.b", enc_embed_b);
    f("dec_embed.w", dec_embed_w);
    f("dec_embed.b", dec_embed_b);
    for (std::size_t l = 0; l < encoder.size(); ++l) {
      encoder[l].visit("enc" + std::to_string(l), f);
    }
    for (std::size_t l = 0; l < decoder.size(); ++l) {
      decoder[l].visit("dec" + std::to_string(l), f);
    }
    f("out.w", out_w);
    f("out.b", out_b);
  }
};

using ModelParams = ModelParamsT<Tensor>;
using ParamVars = ModelParamsT<ag::Var>;

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, deterministic in seed.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
ModelParams zero_params(const ModelConfig& cfg);
Index param_count(const ModelConfig& cfg);
std::vector<std::pair<std::string, Tensor*>> named_tensors(ModelParams& params);
std::vector<std::pair<std::string, const Tensor*>> named_tensors(
    const ModelParams& params);
/// Registers every parameter as a tracked leaf on the tape, in visit order.
ParamVars lift_params(ag::Tape& tape, const ModelParams& params);
std::vector<ag::Var> flatten_vars(ParamVars& vars);
/// Rebuilds the parameter structure from leaves created in visit order.
ParamVars assemble_params(const ModelConfig& cfg, const std::vector<ag::Var>& flat);

// ---- architecture pieces ----

/// Fixed sinusoidal positional encoding, [len x d_model].
Tensor positional_encoding(Index len, Index d_model);

/// Decoder seed per the decomposition scheme: the last I/2 input steps are
/// split into seasonal/trend, then extended over the horizon with zeros
/// (seasonal) and the per-feature input mean (trend).
std::pair<Tensor, Tensor> init_decoder_inputs(const Tensor& x_en,
                                              const ModelConfig& cfg);

ag::Var encoder_layer(ag::Var x, const EncoderLayerT<ag::Var>& p,
                      const ModelConfig& cfg);

struct DecoderLayerOut {
  ag::Var seasonal;
  std::array<ag::Var, 3> trend_contribs;  ///< already projected to data space
};

DecoderLayerOut decoder_layer(ag::Var x, ag::Var enc_out,
                              const DecoderLayerT<ag::Var>& p,
                              const ModelConfig& cfg);

/// Full forward pass on an existing tape; x_en is consumed as a constant.
ag::Var forward_on_tape(ag::Tape& tape, const ParamVars& params,
                        const Tensor& x_en, const ModelConfig& cfg);

/// Convenience forward on a throwaway tape. x_en must be standardized by the
/// caller; returns the [O x D] forecast.
Tensor forward(const Tensor& x_en, const ModelParams& params,
               const ModelConfig& cfg);

// ---- checkpointing ----

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::uint64_t seed = 0;
};

/// JSON container with the config, seed, and named parameter arrays; doubles
/// round-trip exactly, so save -> load -> forward is bit-identical.
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelParams& params, std::uint64_t seed);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace ked

#endif  // KED_MODEL_HPP
