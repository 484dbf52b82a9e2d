#include "kfusion/model.hpp"

#include <cmath>

#include "kfusion/errors.hpp"
#include "kfusion/fusion.hpp"
#include "kfusion/ops.hpp"

namespace kfusion {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoKfusion: return "no_kfusion";
    case Ablation::NoLstm: return "no_lstm";
    case Ablation::NoGlobal: return "no_global";
    case Ablation::ReplMlp: return "repl_mlp";
  }
  return "full";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::Full;
  if (s == "no_kfusion") return Ablation::NoKfusion;
  if (s == "no_lstm") return Ablation::NoLstm;
  if (s == "no_global") return Ablation::NoGlobal;
  if (s == "repl_mlp") return Ablation::ReplMlp;
  throw ValidationError("unknown ablation mode '" + s + "'");
}

void ModelConfig::validate() const {
  if (frames < 1 || face_features < 1 || mouth_features < 1 || d_model < 1 || heads < 1 ||
      enc_layers < 1 || dec_layers < 1 || lstm_hidden < 1 || emotion_dim < 1 ||
      audio_frame_width < 1) {
    throw ValidationError("ModelConfig: all dimensions must be positive");
  }
  if (d_model % heads != 0) {
    throw ValidationError("ModelConfig: d_model must be divisible by heads");
  }
  if (mouth_features > face_features) {
    throw ValidationError("ModelConfig: mouth features exceed face features");
  }
}

ModelConfig ModelConfig::miniature() {
  ModelConfig cfg;
  cfg.frames = 4;
  cfg.face_features = 8;
  cfg.mouth_features = 4;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.lstm_hidden = 4;
  cfg.emotion_dim = 4;
  cfg.audio_frame_width = 4;
  cfg.kan_grid = 3;
  cfg.kan_order = 2;
  return cfg;
}

namespace {

LinearParams make_linear(int in, int out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (in + out));
  std::vector<double> w(static_cast<std::size_t>(in) * out);
  for (double& v : w) v = rng.uniform(-limit, limit);
  LinearParams p;
  p.w = Tensor::from_values(Shape3{1, in, out}, std::move(w), true);
  p.b = Tensor::zeros(Shape3{1, 1, out}, true);
  return p;
}

LayerNormParams make_layer_norm(int dim) {
  LayerNormParams p;
  p.gamma = Tensor::full(Shape3{1, 1, dim}, 1.0, true);
  p.beta = Tensor::zeros(Shape3{1, 1, dim}, true);
  return p;
}

ConvParams make_conv(int out_ch, int in_ch, int k, Rng& rng) {
  const double limit = std::sqrt(6.0 / (in_ch * k + out_ch * k));
  std::vector<double> w(static_cast<std::size_t>(out_ch) * in_ch * k);
  for (double& v : w) v = rng.uniform(-limit, limit);
  ConvParams p;
  p.w = Tensor::from_values(Shape3{out_ch, in_ch, k}, std::move(w), true);
  p.b = Tensor::zeros(Shape3{1, out_ch, 1}, true);
  return p;
}

AttentionParams make_attention(int d, Rng& rng) {
  return AttentionParams{make_linear(d, d, rng), make_linear(d, d, rng),
                         make_linear(d, d, rng), make_linear(d, d, rng)};
}

EncoderLayerParams make_encoder_layer(const ModelConfig& cfg, Rng& rng) {
  EncoderLayerParams p;
  p.attn = make_attention(cfg.d_model, rng);
  p.ln1 = make_layer_norm(cfg.d_model);
  p.ff1 = make_linear(cfg.d_model, cfg.ffn_hidden(), rng);
  p.ff2 = make_linear(cfg.ffn_hidden(), cfg.d_model, rng);
  p.ln2 = make_layer_norm(cfg.d_model);
  return p;
}

DecoderLayerParams make_decoder_layer(const ModelConfig& cfg, Rng& rng) {
  DecoderLayerParams p;
  p.self_attn = make_attention(cfg.d_model, rng);
  p.ln1 = make_layer_norm(cfg.d_model);
  p.cross_attn = make_attention(cfg.d_model, rng);
  p.ln2 = make_layer_norm(cfg.d_model);
  p.ff1 = make_linear(cfg.d_model, cfg.ffn_hidden(), rng);
  p.ff2 = make_linear(cfg.ffn_hidden(), cfg.d_model, rng);
  p.ln3 = make_layer_norm(cfg.d_model);
  return p;
}

EncoderParams make_encoder(int input_dim, const ModelConfig& cfg, Rng& rng) {
  EncoderParams p;
  p.in_proj = make_linear(input_dim, cfg.d_model, rng);
  for (int i = 0; i < cfg.enc_layers; ++i) p.layers.push_back(make_encoder_layer(cfg, rng));
  return p;
}

DecoderParams make_decoder(int identity_dim, int out_dim, const ModelConfig& cfg, Rng& rng) {
  DecoderParams p;
  p.id_embed = make_linear(identity_dim, cfg.d_model, rng);
  for (int i = 0; i < cfg.dec_layers; ++i) p.layers.push_back(make_decoder_layer(cfg, rng));
  p.out_proj = make_linear(cfg.d_model, out_dim, rng);
  return p;
}

// Orthogonal H x H blocks per gate via Gram-Schmidt on seeded normals.
Tensor make_orthogonal_recurrent(int hidden, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(hidden) * 4 * hidden, 0.0);
  for (int gate = 0; gate < 4; ++gate) {
    std::vector<std::vector<double>> rows(hidden, std::vector<double>(hidden));
    for (auto& row : rows) {
      for (double& v : row) v = rng.normal();
    }
    for (int i = 0; i < hidden; ++i) {
      for (int j = 0; j < i; ++j) {
        double dot = 0.0;
        for (int k = 0; k < hidden; ++k) dot += rows[i][k] * rows[j][k];
        for (int k = 0; k < hidden; ++k) rows[i][k] -= dot * rows[j][k];
      }
      double norm = 0.0;
      for (int k = 0; k < hidden; ++k) norm += rows[i][k] * rows[i][k];
      norm = std::sqrt(std::max(norm, 1e-12));
      for (int k = 0; k < hidden; ++k) rows[i][k] /= norm;
    }
    // Block occupies columns [gate*H, (gate+1)*H) of the (H, 4H) matrix.
    for (int r = 0; r < hidden; ++r) {
      for (int c = 0; c < hidden; ++c) {
        w[static_cast<std::size_t>(r) * 4 * hidden + gate * hidden + c] = rows[r][c];
      }
    }
  }
  return Tensor::from_values(Shape3{1, hidden, 4 * hidden}, std::move(w), true);
}

LstmParams make_lstm(int input_dim, int hidden, int out_dim, Rng& rng) {
  LstmParams p;
  const double limit = std::sqrt(6.0 / (input_dim + 4 * hidden));
  std::vector<double> w(static_cast<std::size_t>(input_dim) * 4 * hidden);
  for (double& v : w) v = rng.uniform(-limit, limit);
  p.w_ih = Tensor::from_values(Shape3{1, input_dim, 4 * hidden}, std::move(w), true);
  p.w_hh = make_orthogonal_recurrent(hidden, rng);
  std::vector<double> bias(static_cast<std::size_t>(4) * hidden, 0.0);
  for (int i = hidden; i < 2 * hidden; ++i) bias[i] = 1.0;  // forget gate
  p.bias = Tensor::from_values(Shape3{1, 1, 4 * hidden}, std::move(bias), true);
  p.proj = make_linear(hidden, out_dim, rng);
  return p;
}

}  // namespace

ModelParams make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams mp;
  mp.config = config;

  // Each parameter group draws from its own derived stream so ablations that
  // skip a group leave every other group's initialization untouched.
  Rng rng_emotion(Rng::derive(seed, 0));
  Rng rng_global(Rng::derive(seed, 1));
  Rng rng_content(Rng::derive(seed, 2));
  Rng rng_fusion(Rng::derive(seed, 3));
  Rng rng_head(Rng::derive(seed, 4));
  Rng rng_nk(Rng::derive(seed, 5));

  mp.emotion_table = Tensor::full(Shape3{1, 8, config.emotion_dim}, 1.0, true);
  (void)rng_emotion;

  mp.global.encoder = make_encoder(config.audio_frame_width, config, rng_global);
  mp.global.conv = make_conv(config.frames, config.frames, 1, rng_global);
  mp.global.dec_face = make_decoder(config.face_features, config.face_features, config, rng_global);
  mp.global.dec_mouth =
      make_decoder(config.mouth_features, config.mouth_features, config, rng_global);

  mp.content.encoder = make_encoder(config.emotion_dim, config, rng_content);
  mp.content.conv = make_conv(config.frames, config.frames, 1, rng_content);
  std::vector<double> seed_vals(static_cast<std::size_t>(config.d_model));
  for (double& v : seed_vals) v = 0.02 * rng_content.normal();
  mp.content.query_seed =
      Tensor::from_values(Shape3{1, 1, config.d_model}, std::move(seed_vals), true);
  mp.content.dec = make_decoder(config.d_model, config.face_features, config, rng_content);
  mp.content.lstm_face =
      make_lstm(config.emotion_dim, config.lstm_hidden, config.face_features, rng_content);
  mp.content.lstm_mouth =
      make_lstm(config.emotion_dim, config.lstm_hidden, config.mouth_features, rng_content);

  const int C = config.frames;
  if (config.ablation == Ablation::NoKfusion) {
    mp.fusion.nk_face = make_linear(config.face_features, config.face_features, rng_nk);
    mp.fusion.nk_mouth = make_linear(config.mouth_features, config.mouth_features, rng_nk);
  } else {
    mp.fusion.m_reduce = make_conv(C, 2 * C, 1, rng_fusion);
    mp.fusion.m_mid = make_conv(C, C, 3, rng_fusion);
    mp.fusion.m_out = make_conv(C, C, 1, rng_fusion);
    mp.fusion.f_reduce = make_conv(C, 3 * C, 1, rng_fusion);
    mp.fusion.f_mid = make_conv(C, C, 3, rng_fusion);
    mp.fusion.f_out = make_conv(C, C, 1, rng_fusion);
    mp.fusion.res = make_conv(C, 3 * C, 1, rng_fusion);
    const SplineGrid grid = SplineGrid::make(-1.0, 1.0, config.kan_grid, config.kan_order);
    const int dims[2] = {config.face_features, config.face_features};
    if (config.ablation == Ablation::ReplMlp) {
      const int mlp_dims[3] = {config.face_features, config.face_features, config.face_features};
      mp.fusion.head = mlp_substitute(mlp_dims, rng_head);
    } else {
      mp.fusion.head = make_kan_network(dims, grid, rng_head);
    }
  }
  return mp;
}

namespace {

void collect_linear(std::vector<NamedParam>& out, const std::string& prefix,
                    const LinearParams& p) {
  out.push_back({prefix + ".w", p.w});
  out.push_back({prefix + ".b", p.b});
}

void collect_layer_norm(std::vector<NamedParam>& out, const std::string& prefix,
                        const LayerNormParams& p) {
  out.push_back({prefix + ".gamma", p.gamma});
  out.push_back({prefix + ".beta", p.beta});
}

void collect_conv(std::vector<NamedParam>& out, const std::string& prefix, const ConvParams& p) {
  out.push_back({prefix + ".w", p.w});
  out.push_back({prefix + ".b", p.b});
}

void collect_attention(std::vector<NamedParam>& out, const std::string& prefix,
                       const AttentionParams& p) {
  collect_linear(out, prefix + ".q", p.q);
  collect_linear(out, prefix + ".k", p.k);
  collect_linear(out, prefix + ".v", p.v);
  collect_linear(out, prefix + ".o", p.o);
}

void collect_encoder(std::vector<NamedParam>& out, const std::string& prefix,
                     const EncoderParams& p) {
  collect_linear(out, prefix + ".in_proj", p.in_proj);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const std::string lp = prefix + ".l" + std::to_string(i);
    collect_attention(out, lp + ".attn", p.layers[i].attn);
    collect_layer_norm(out, lp + ".ln1", p.layers[i].ln1);
    collect_linear(out, lp + ".ff1", p.layers[i].ff1);
    collect_linear(out, lp + ".ff2", p.layers[i].ff2);
    collect_layer_norm(out, lp + ".ln2", p.layers[i].ln2);
  }
}

void collect_decoder(std::vector<NamedParam>& out, const std::string& prefix,
                     const DecoderParams& p) {
  collect_linear(out, prefix + ".id_embed", p.id_embed);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const std::string lp = prefix + ".l" + std::to_string(i);
    collect_attention(out, lp + ".self", p.layers[i].self_attn);
    collect_layer_norm(out, lp + ".ln1", p.layers[i].ln1);
    collect_attention(out, lp + ".cross", p.layers[i].cross_attn);
    collect_layer_norm(out, lp + ".ln2", p.layers[i].ln2);
    collect_linear(out, lp + ".ff1", p.layers[i].ff1);
    collect_linear(out, lp + ".ff2", p.layers[i].ff2);
    collect_layer_norm(out, lp + ".ln3", p.layers[i].ln3);
  }
  collect_linear(out, prefix + ".out_proj", p.out_proj);
}

void collect_lstm(std::vector<NamedParam>& out, const std::string& prefix, const LstmParams& p) {
  out.push_back({prefix + ".w_ih", p.w_ih});
  out.push_back({prefix + ".w_hh", p.w_hh});
  out.push_back({prefix + ".bias", p.bias});
  collect_linear(out, prefix + ".proj", p.proj);
}

}  // namespace

std::vector<NamedParam> named_parameters(const ModelParams& mp) {
  std::vector<NamedParam> out;
  out.push_back({"emotion.table", mp.emotion_table});
  collect_encoder(out, "global.enc", mp.global.encoder);
  collect_conv(out, "global.conv", mp.global.conv);
  collect_decoder(out, "global.dec_face", mp.global.dec_face);
  collect_decoder(out, "global.dec_mouth", mp.global.dec_mouth);
  collect_encoder(out, "content.enc", mp.content.encoder);
  collect_conv(out, "content.conv", mp.content.conv);
  out.push_back({"content.query_seed", mp.content.query_seed});
  collect_decoder(out, "content.dec", mp.content.dec);
  collect_lstm(out, "content.lstm_face", mp.content.lstm_face);
  collect_lstm(out, "content.lstm_mouth", mp.content.lstm_mouth);
  if (mp.config.ablation == Ablation::NoKfusion) {
    collect_linear(out, "fusion.nk_face", mp.fusion.nk_face);
    collect_linear(out, "fusion.nk_mouth", mp.fusion.nk_mouth);
  } else {
    collect_conv(out, "fusion.m_reduce", mp.fusion.m_reduce);
    collect_conv(out, "fusion.m_mid", mp.fusion.m_mid);
    collect_conv(out, "fusion.m_out", mp.fusion.m_out);
    collect_conv(out, "fusion.f_reduce", mp.fusion.f_reduce);
    collect_conv(out, "fusion.f_mid", mp.fusion.f_mid);
    collect_conv(out, "fusion.f_out", mp.fusion.f_out);
    collect_conv(out, "fusion.res", mp.fusion.res);
    if (const auto* kan = std::get_if<KanNetwork>(&mp.fusion.head)) {
      for (std::size_t i = 0; i < kan->layers.size(); ++i) {
        const std::string lp = "fusion.kan.l" + std::to_string(i);
        out.push_back({lp + ".coeff", kan->layers[i].coeff});
        out.push_back({lp + ".w_base", kan->layers[i].w_base});
        out.push_back({lp + ".w_spline", kan->layers[i].w_spline});
      }
    } else if (const auto* mlp = std::get_if<MlpNetwork>(&mp.fusion.head)) {
      for (std::size_t i = 0; i < mlp->weights.size(); ++i) {
        const std::string lp = "fusion.mlp.l" + std::to_string(i);
        out.push_back({lp + ".w", mlp->weights[i]});
        out.push_back({lp + ".b", mlp->biases[i]});
      }
    }
  }
  return out;
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  Tensor y = matmul(x, p.w);
  return add(y, broadcast_to(p.b, y.shape()));
}

Tensor conv_block(const Tensor& x, const ConvParams& p) {
  Tensor y = conv1d(x, p.w);
  return add(y, broadcast_to(p.b, y.shape()));
}

Tensor positional_encoding(int batch, int length, int dim) {
  std::vector<double> vals(static_cast<std::size_t>(length) * dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / dim;
      const double angle = pos / std::pow(10000.0, exponent);
      vals[static_cast<std::size_t>(pos) * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  Tensor pe = Tensor::from_values(Shape3{1, length, dim}, std::move(vals));
  return broadcast_to(pe, Shape3{batch, length, dim});
}

namespace {

Tensor attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p, int heads) {
  const Shape3 qs = q_in.shape();
  const int d = qs.l;
  const int dk = d / heads;
  Tensor q = linear(q_in, p.q);
  Tensor k = linear(kv_in, p.k);
  Tensor v = linear(kv_in, p.v);
  Tensor out = Tensor::zeros(qs);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_feature(q, h * dk, (h + 1) * dk);
    Tensor kh = slice_feature(k, h * dk, (h + 1) * dk);
    Tensor vh = slice_feature(v, h * dk, (h + 1) * dk);
    Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt);
    Tensor weights = softmax(scores, Axis::Feature);
    Tensor oh = matmul(weights, vh);
    out = slice_write_feature(out, oh, h * dk);
  }
  return linear(out, p.o);
}

Tensor apply_layer_norm(const Tensor& x, const LayerNormParams& p) {
  Tensor y = layer_norm(x);
  y = mul(y, broadcast_to(p.gamma, y.shape()));
  return add(y, broadcast_to(p.beta, y.shape()));
}

Tensor feed_forward(const Tensor& x, const LinearParams& ff1, const LinearParams& ff2) {
  return linear(silu(linear(x, ff1)), ff2);
}

}  // namespace

Tensor encoder_forward(const Tensor& input, const EncoderParams& params, const ModelConfig& cfg) {
  const Shape3 s = input.shape();
  Tensor h = linear(input, params.in_proj);
  h = add(h, positional_encoding(s.b, s.c, cfg.d_model));
  for (const EncoderLayerParams& layer : params.layers) {
    h = apply_layer_norm(add(h, attention(h, h, layer.attn, cfg.heads)), layer.ln1);
    h = apply_layer_norm(add(h, feed_forward(h, layer.ff1, layer.ff2)), layer.ln2);
  }
  return h;
}

Tensor decoder_forward(const Tensor& memory, const Tensor& identity, const DecoderParams& params,
                       const ModelConfig& cfg) {
  const Shape3 ms = memory.shape();
  const Shape3 is = identity.shape();
  if (is.c != 1 || is.l != params.id_embed.w.shape().c) {
    throw ShapeError("decoder_forward: identity shape " + is.str() + " does not match embed dim " +
                     std::to_string(params.id_embed.w.shape().c));
  }
  Tensor q = linear(identity, params.id_embed);  // (B,1,d)
  q = broadcast_to(q, Shape3{ms.b, ms.c, cfg.d_model});
  q = add(q, positional_encoding(ms.b, ms.c, cfg.d_model));
  for (const DecoderLayerParams& layer : params.layers) {
    q = apply_layer_norm(add(q, attention(q, q, layer.self_attn, cfg.heads)), layer.ln1);
    q = apply_layer_norm(add(q, attention(q, memory, layer.cross_attn, cfg.heads)), layer.ln2);
    q = apply_layer_norm(add(q, feed_forward(q, layer.ff1, layer.ff2)), layer.ln3);
  }
  return linear(q, params.out_proj);
}

std::pair<Tensor, Tensor> global_forward(const Tensor& audio_frames, const Tensor& identity_face,
                                         const Tensor& identity_mouth,
                                         const GlobalBranchParams& params, const ModelConfig& cfg) {
  Tensor memory = encoder_forward(audio_frames, params.encoder, cfg);
  memory = conv_block(memory, params.conv);
  Tensor gb = decoder_forward(memory, identity_face, params.dec_face, cfg);
  Tensor gb_m = decoder_forward(memory, identity_mouth, params.dec_mouth, cfg);
  return {gb, gb_m};
}

std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x_t, const Tensor& h_prev,
                                         const Tensor& c_prev, const LstmParams& params) {
  const int hidden = params.w_hh.shape().c;
  Tensor gates = add(matmul(x_t, params.w_ih), matmul(h_prev, params.w_hh));
  gates = add(gates, broadcast_to(params.bias, gates.shape()));
  Tensor i = sigmoid(slice_feature(gates, 0, hidden));
  Tensor f = sigmoid(slice_feature(gates, hidden, 2 * hidden));
  Tensor g = tanh(slice_feature(gates, 2 * hidden, 3 * hidden));
  Tensor o = sigmoid(slice_feature(gates, 3 * hidden, 4 * hidden));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

Tensor lstm_forward(const Tensor& seq, const LstmParams& params, int out_dim) {
  const Shape3 s = seq.shape();
  const int hidden = params.w_hh.shape().c;
  if (params.w_ih.shape().c != s.l) {
    throw ShapeError("lstm_forward: input dim " + std::to_string(s.l) + " does not match w_ih " +
                     params.w_ih.shape().str());
  }
  Tensor h = Tensor::zeros(Shape3{s.b, 1, hidden});
  Tensor c = Tensor::zeros(Shape3{s.b, 1, hidden});
  std::vector<Tensor> steps;
  steps.reserve(s.c);
  for (int t = 0; t < s.c; ++t) {
    Tensor x_t = slice_channel(seq, t, t + 1);
    auto [h_next, c_next] = lstm_cell_step(x_t, h, c, params);
    h = h_next;
    c = c_next;
    steps.push_back(h);
  }
  Tensor all = concat_channel(steps);
  return linear(all, params.proj);
}

ContentOutputs content_forward(const Tensor& x_weighted, const ContentBranchParams& params,
                               const ModelConfig& cfg) {
  const Shape3 s = x_weighted.shape();
  Tensor memory = encoder_forward(x_weighted, params.encoder, cfg);
  memory = conv_block(memory, params.conv);
  Tensor query = broadcast_to(params.query_seed, Shape3{s.b, 1, cfg.d_model});
  ContentOutputs out;
  out.ct = decoder_forward(memory, query, params.dec, cfg);
  out.f = lstm_forward(x_weighted, params.lstm_face, cfg.face_features);
  out.m = lstm_forward(x_weighted, params.lstm_mouth, cfg.mouth_features);
  return out;
}

ForwardTrace model_forward_traced(const ModelParams& mp, const BatchInputs& in) {
  const ModelConfig& cfg = mp.config;
  const Shape3 as = in.audio_frames.shape();
  const int B = as.b;
  if (static_cast<int>(in.emotion_ids.size()) != B) {
    throw ShapeError("model_forward: emotion id count does not match batch");
  }

  // Eq-7 style weighting: per-clip emotion row, broadcast over time.
  Tensor row = embedding_rows(mp.emotion_table, in.emotion_ids);  // (B,1,D)
  Tensor x_weighted = mul(in.content, broadcast_to(row, in.content.shape()));

  ForwardTrace tr;
  if (cfg.ablation == Ablation::NoGlobal) {
    tr.gb = Tensor::zeros(Shape3{B, cfg.frames, cfg.face_features});
    tr.gb_m = Tensor::zeros(Shape3{B, cfg.frames, cfg.mouth_features});
  } else {
    auto [gb, gb_m] =
        global_forward(in.audio_frames, in.identity_face, in.identity_mouth, mp.global, cfg);
    tr.gb = gb;
    tr.gb_m = gb_m;
  }

  ContentOutputs co;
  if (cfg.ablation == Ablation::NoLstm) {
    Tensor memory = encoder_forward(x_weighted, mp.content.encoder, cfg);
    memory = conv_block(memory, mp.content.conv);
    Tensor query = broadcast_to(mp.content.query_seed, Shape3{B, 1, cfg.d_model});
    co.ct = decoder_forward(memory, query, mp.content.dec, cfg);
    co.f = Tensor::zeros(Shape3{B, cfg.frames, cfg.face_features});
    co.m = Tensor::zeros(Shape3{B, cfg.frames, cfg.mouth_features});
  } else {
    co = content_forward(x_weighted, mp.content, cfg);
  }
  tr.ct = co.ct;
  tr.f = co.f;
  tr.m = co.m;

  tr.y = fusion_forward(tr.gb, tr.gb_m, tr.ct, tr.f, tr.m, mp.fusion, cfg);
  return tr;
}

Tensor model_forward(const ModelParams& mp, const BatchInputs& in) {
  return model_forward_traced(mp, in).y;
}

}  // namespace kfusion
