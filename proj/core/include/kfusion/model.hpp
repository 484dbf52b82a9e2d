#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kfusion/kan.hpp"
#include "kfusion/rng.hpp"
#include "kfusion/tensor.hpp"

namespace kfusion {

enum class Ablation { Full, NoKfusion, NoLstm, NoGlobal, ReplMlp };
enum class ResidualMode { Product, Sum };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct ModelConfig {
  int frames = 30;           // C
  int face_features = 136;   // F
  int mouth_features = 40;   // M
  int d_model = 64;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int lstm_hidden = 64;
  int emotion_dim = 80;      // D
  int audio_frame_width = 534;  // W = ceil(16000 / 30)
  int kan_grid = 5;
  int kan_order = 3;
  ResidualMode residual = ResidualMode::Product;
  Ablation ablation = Ablation::Full;

  int mouth_offset() const { return face_features - mouth_features; }
  int ffn_hidden() const { return 2 * d_model; }
  void validate() const;

  // Miniature dimensions used by gradient-integrity checks.
  static ModelConfig miniature();
};

struct LinearParams {
  Tensor w;  // (1, in, out)
  Tensor b;  // (1, 1, out)
};

struct LayerNormParams {
  Tensor gamma;  // (1, 1, d)
  Tensor beta;
};

struct ConvParams {
  Tensor w;  // (out_channels, in_channels, k)
  Tensor b;  // (1, out_channels, 1)
};

struct AttentionParams {
  LinearParams q, k, v, o;
};

struct EncoderLayerParams {
  AttentionParams attn;
  LayerNormParams ln1, ln2;
  LinearParams ff1, ff2;
};

struct DecoderLayerParams {
  AttentionParams self_attn, cross_attn;
  LayerNormParams ln1, ln2, ln3;
  LinearParams ff1, ff2;
};

struct EncoderParams {
  LinearParams in_proj;
  std::vector<EncoderLayerParams> layers;
};

struct DecoderParams {
  LinearParams id_embed;
  std::vector<DecoderLayerParams> layers;
  LinearParams out_proj;
};

struct LstmParams {
  Tensor w_ih;  // (1, in, 4H), gate order i f g o
  Tensor w_hh;  // (1, H, 4H)
  Tensor bias;  // (1, 1, 4H)
  LinearParams proj;
};

struct GlobalBranchParams {
  EncoderParams encoder;
  ConvParams conv;  // k=1 projection over the frame channels
  DecoderParams dec_face, dec_mouth;
};

struct ContentBranchParams {
  EncoderParams encoder;
  ConvParams conv;
  Tensor query_seed;  // (1,1,d_model) learned decoder query
  DecoderParams dec;
  LstmParams lstm_face, lstm_mouth;
};

struct FusionParams {
  ConvParams m_reduce, m_mid, m_out;  // bottleneck over x_m: k1, k3, k1
  ConvParams f_reduce, f_mid, f_out;  // bottleneck over x_f
  ConvParams res;                     // k=1 residual path over x_f
  FusionHead head;
  // channel-mean + linear replacement (NoKfusion only)
  LinearParams nk_face, nk_mouth;
};

struct ModelParams {
  ModelConfig config;
  Tensor emotion_table;  // (1, 8, D)
  GlobalBranchParams global;
  ContentBranchParams content;
  FusionParams fusion;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

ModelParams make_model(const ModelConfig& config, std::uint64_t seed);
std::vector<NamedParam> named_parameters(const ModelParams& params);

// Preprocessed per-batch inputs; constant leaves of the training graph.
struct BatchInputs {
  Tensor audio_frames;    // (B, C, W)
  Tensor content;         // (B, C, D)
  Tensor identity_face;   // (B, 1, F) normalized
  Tensor identity_mouth;  // (B, 1, M)
  std::vector<int> emotion_ids;  // size B
};

// --- branch forwards ---

// Input projection + sinusoidal positions + self-attention/LN/FFN stack.
Tensor encoder_forward(const Tensor& input, const EncoderParams& params,
                       const ModelConfig& cfg);

// Identity embedded to d_model, tiled to C query tokens with positions, then
// self-attention, cross-attention to `memory`, feed-forward per layer, and a
// final projection.
Tensor decoder_forward(const Tensor& memory, const Tensor& identity,
                       const DecoderParams& params, const ModelConfig& cfg);

// gb (B,C,F) and gb_m (B,C,M); the encoder and conv run once and are shared.
std::pair<Tensor, Tensor> global_forward(const Tensor& audio_frames,
                                         const Tensor& identity_face,
                                         const Tensor& identity_mouth,
                                         const GlobalBranchParams& params,
                                         const ModelConfig& cfg);

// Standard i/f/g/o recurrence with zero initial state, then a per-step
// linear projection to out_dim.
Tensor lstm_forward(const Tensor& seq, const LstmParams& params, int out_dim);

// One recurrence step; exposed for gate-level tests.
std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x_t, const Tensor& h_prev,
                                         const Tensor& c_prev, const LstmParams& params);

struct ContentOutputs {
  Tensor ct, f, m;
};

ContentOutputs content_forward(const Tensor& x_weighted, const ContentBranchParams& params,
                               const ModelConfig& cfg);

// --- end to end ---

struct ForwardTrace {
  Tensor gb, gb_m, ct, f, m, y;
};

Tensor model_forward(const ModelParams& params, const BatchInputs& inputs);
ForwardTrace model_forward_traced(const ModelParams& params, const BatchInputs& inputs);

// Shared helpers.
Tensor linear(const Tensor& x, const LinearParams& p);
Tensor conv_block(const Tensor& x, const ConvParams& p);
Tensor positional_encoding(int batch, int length, int dim);

}  // namespace kfusion
