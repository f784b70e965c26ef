#include "dcdm/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dcdm {

Mode parse_mode(const std::string& name) {
  if (name == "mdlm") return Mode::mdlm;
  if (name == "bdlm") return Mode::bdlm;
  if (name == "dcdm") return Mode::dcdm;
  throw std::invalid_argument("mode: expected mdlm, bdlm or dcdm, got '" + name + "'");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::mdlm: return "mdlm";
    case Mode::bdlm: return "bdlm";
    default: return "dcdm";
  }
}

void ModelConfig::validate() const {
  if (d < 2 || d % 2 != 0)
    throw std::invalid_argument("d: must be even and >= 2, got " + std::to_string(d));
  if (n_heads < 1 || d % n_heads != 0)
    throw std::invalid_argument("n_heads: " + std::to_string(n_heads) + " must divide d = " +
                                std::to_string(d));
  if (n_layers < 2)
    throw std::invalid_argument("n_layers: need at least 2, got " + std::to_string(n_layers));
  if (k < 1) throw std::invalid_argument("k: must be >= 1, got " + std::to_string(k));
  if (h < 1 || h > d)
    throw std::invalid_argument("h: " + std::to_string(h) + " outside [1, d=" +
                                std::to_string(d) + "]");
  if (mode == Mode::bdlm && block_size < 1)
    throw std::invalid_argument("block_size: bdlm needs a positive block size");
  if (max_len < 1 || seq_len < 1 || seq_len > max_len)
    throw std::invalid_argument("seq_len: need 1 <= seq_len <= max_len, got seq_len=" +
                                std::to_string(seq_len) + " max_len=" + std::to_string(max_len));
  if (d_ff < 1) throw std::invalid_argument("d_ff: must be positive");
  if (vocab_size < 2) throw std::invalid_argument("vocab_size: must be >= 2");
  if (lambda_chunk < 0.0) throw std::invalid_argument("lambda_chunk: must be >= 0");
  if (rms_eps <= 0.0) throw std::invalid_argument("rms_eps: must be positive");
  if (tau <= 0.0) throw std::invalid_argument("tau: must be positive");
  if (init_std <= 0.0) throw std::invalid_argument("init_std: must be positive");
  if (mu_init_skew < 0.0) throw std::invalid_argument("mu_init_skew: must be >= 0");
}

void Parameters::add(const std::string& name, Tensor t) {
  if (by_name.count(name))
    throw std::invalid_argument("Parameters: duplicate name " + name);
  order.push_back(name);
  by_name.emplace(name, std::move(t));
}

Tensor& Parameters::at(const std::string& name) {
  auto it = by_name.find(name);
  if (it == by_name.end()) throw std::invalid_argument("Parameters: unknown name " + name);
  return it->second;
}

const Tensor& Parameters::at(const std::string& name) const {
  auto it = by_name.find(name);
  if (it == by_name.end()) throw std::invalid_argument("Parameters: unknown name " + name);
  return it->second;
}

long long Parameters::count() const {
  long long n = 0;
  for (const auto& name : order) n += at(name).numel();
  return n;
}

Parameters Parameters::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Parameters p;
  auto weight = [&](const std::string& name, std::vector<int> shape) {
    p.add(name, Tensor::randn(std::move(shape), rng, cfg.init_std));
  };
  auto gain = [&](const std::string& name) { p.add(name, Tensor::full({cfg.d}, 1.0)); };
  auto block = [&](const std::string& pre) {
    gain(pre + ".attn_norm");
    weight(pre + ".wq", {cfg.d, cfg.d});
    weight(pre + ".wk", {cfg.d, cfg.d});
    weight(pre + ".wv", {cfg.d, cfg.d});
    weight(pre + ".wo", {cfg.d, cfg.d});
    gain(pre + ".mlp_norm");
    weight(pre + ".w_gate", {cfg.d, cfg.d_ff});
    weight(pre + ".w_up", {cfg.d, cfg.d_ff});
    weight(pre + ".w_down", {cfg.d_ff, cfg.d});
  };

  weight("embed.tok", {cfg.vocab_size, cfg.d});
  weight("embed.pos", {cfg.max_len, cfg.d});
  block("layer0");
  gain("chunk.norm");
  for (int i = 0; i < cfg.k; ++i)
    weight("chunk.basis." + std::to_string(i), {cfg.d, cfg.h});
  if (cfg.mu_init_skew > 0.0) {
    Tensor& first = p.at("chunk.basis.0");
    for (int i = 0; i < first.numel(); ++i) first.at(i) *= 1.0 + cfg.mu_init_skew;
  }
  weight("chunk.wv", {cfg.d, cfg.d});
  weight("chunk.wo", {cfg.d, cfg.d});
  gain("chunk.mlp_norm");
  weight("chunk.w_gate", {cfg.d, cfg.d_ff});
  weight("chunk.w_up", {cfg.d, cfg.d_ff});
  weight("chunk.w_down", {cfg.d_ff, cfg.d});
  for (int i = 1; i < cfg.n_layers; ++i) block("layer" + std::to_string(i));
  gain("final_norm");
  p.add("chunk.bias", Tensor::zeros({cfg.k}));
  return p;
}

Tensor time_embedding(int d, double t) {
  Tensor v({d});
  const int half = d / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / d);
    v.at(i) = std::sin(t * freq);
    v.at(half + i) = std::cos(t * freq);
  }
  return v;
}

namespace {

Tensor gated_mlp(Tape* tape, const Parameters& p, const std::string& prefix, const Tensor& x) {
  Tensor g = silu(tape, matmul(tape, x, p.at(prefix + ".w_gate")));
  Tensor u = matmul(tape, x, p.at(prefix + ".w_up"));
  return matmul(tape, mul(tape, g, u), p.at(prefix + ".w_down"));
}

Tensor multihead_attention(Tape* tape, const ModelConfig& cfg, const Parameters& p,
                           const std::string& prefix, const Tensor& x, const JointMask& mask) {
  Tensor q = matmul(tape, x, p.at(prefix + ".wq"));
  Tensor k = matmul(tape, x, p.at(prefix + ".wk"));
  Tensor v = matmul(tape, x, p.at(prefix + ".wv"));
  const int hd = cfg.d / cfg.n_heads;
  const double inv = 1.0 / std::sqrt(double(hd));
  std::vector<Tensor> ctx;
  ctx.reserve(cfg.n_heads);
  for (int i = 0; i < cfg.n_heads; ++i) {
    Tensor qh = slice_cols(tape, q, i * hd, (i + 1) * hd);
    Tensor kh = slice_cols(tape, k, i * hd, (i + 1) * hd);
    Tensor vh = slice_cols(tape, v, i * hd, (i + 1) * hd);
    Tensor att = softmax_rows(tape, scale(tape, matmul_nt(tape, qh, kh), inv),
                              mask.allow.data());
    ctx.push_back(matmul(tape, att, vh));
  }
  return matmul(tape, concat_cols(tape, ctx), p.at(prefix + ".wo"));
}

Tensor transformer_block(Tape* tape, const ModelConfig& cfg, const Parameters& p,
                         const std::string& prefix, Tensor x, const JointMask& mask) {
  Tensor a = rmsnorm(tape, x, p.at(prefix + ".attn_norm"), cfg.rms_eps);
  x = add(tape, x, multihead_attention(tape, cfg, p, prefix, a, mask));
  Tensor m = rmsnorm(tape, x, p.at(prefix + ".mlp_norm"), cfg.rms_eps);
  return add(tape, x, gated_mlp(tape, p, prefix, m));
}

struct ChunkStage {
  Tensor hidden;
  ChunkAssignment chunks;  // length l_half
  Tensor aux;              // scalar
};

// Chunking sublayer over the full stream; routing and the balance loss read
// rows [0, l_half), whose ids both halves share.
ChunkStage chunking_stage(Tape* tape, const ModelConfig& cfg, const Parameters& p, Tensor x,
                          const JointMask& stage1, int l_half, const ForwardOptions& opt,
                          bool infer) {
  ChunkStage out;
  Tensor normed = rmsnorm(tape, x, p.at("chunk.norm"), cfg.rms_eps);
  SubspaceBank bank;
  bank.mu.reserve(cfg.k);
  for (int i = 0; i < cfg.k; ++i) bank.mu.push_back(p.at("chunk.basis." + std::to_string(i)));
  RoutingScores scores = project(tape, normed, bank);
  std::vector<Tensor> affs;
  affs.reserve(cfg.k);
  for (int i = 0; i < cfg.k; ++i) affs.push_back(affinity(tape, scores.p[i]));
  x = add(tape, x,
          soft_aggregate(tape, normed, affs, p.at("chunk.wv"), p.at("chunk.wo"), stage1));
  Tensor m = rmsnorm(tape, x, p.at("chunk.mlp_norm"), cfg.rms_eps);
  out.hidden = add(tape, x, gated_mlp(tape, p, "chunk", m));

  if (opt.chunk_override) {
    if (static_cast<int>(opt.chunk_override->size()) != l_half)
      throw std::invalid_argument("forward: chunk override length " +
                                  std::to_string(opt.chunk_override->size()) + " != " +
                                  std::to_string(l_half));
    // ids are ordering labels; positional overrides legitimately exceed k
    for (int id : *opt.chunk_override)
      if (id < 1)
        throw std::invalid_argument("forward: chunk override id " + std::to_string(id) +
                                    " must be positive");
    out.chunks.c = *opt.chunk_override;
  } else if (cfg.mode == Mode::mdlm) {
    out.chunks.c.assign(l_half, 1);
  } else if (cfg.mode == Mode::bdlm || opt.positional_override) {
    out.chunks.c = positional_chunks(l_half, cfg.block_size);
  } else {
    RoutingScores half;
    half.r = Tensor({l_half, cfg.k});
    for (int i = 0; i < l_half; ++i)
      for (int j = 0; j < cfg.k; ++j) half.r.at(i, j) = scores.r.at(i, j);
    if (opt.bias) {
      out.chunks = route_hard(half, opt.bias);
    } else {
      BiasState frozen(cfg.k);
      const Tensor& b = p.at("chunk.bias");
      for (int j = 0; j < cfg.k; ++j) frozen.b[j] = b.at(j);
      out.chunks = route_hard(half, &frozen);
    }
  }

  const bool routed_training =
      !infer && cfg.mode == Mode::dcdm && !opt.positional_override;
  if (routed_training) {
    std::vector<double> drawn;
    const std::vector<double>* noise = opt.gumbel_noise;
    if (noise && static_cast<int>(noise->size()) != l_half * cfg.k)
      throw std::invalid_argument("forward: gumbel noise size " +
                                  std::to_string(noise->size()) + " != " +
                                  std::to_string(l_half * cfg.k));
    if (!noise) {
      if (!opt.rng)
        throw std::invalid_argument(
            "forward_train: routed mode needs an rng or pre-drawn gumbel noise");
      drawn.resize(static_cast<std::size_t>(l_half) * cfg.k);
      for (double& g : drawn) g = opt.rng->gumbel();
      noise = &drawn;
    }
    Tensor r_half = scores.r.rows() == l_half ? scores.r
                                              : slice_rows(tape, scores.r, 0, l_half);
    Tensor samples = gumbel_st_rows(tape, r_half, cfg.tau, *noise, opt.gumbel_soft);
    out.aux = chunk_balance_loss(tape, samples, 1e-8);
  } else {
    out.aux = Tensor::scalar(0.0);
  }
  return out;
}

Tensor embed_stream(Tape* tape, const ModelConfig& cfg, const Parameters& p,
                    const std::vector<int>& tokens, int l_half, double t) {
  const int n = static_cast<int>(tokens.size());
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) pos[i] = i % l_half;
  Tensor x = add(tape, embedding(tape, p.at("embed.tok"), tokens),
                 embedding(tape, p.at("embed.pos"), pos));
  return add_rowvec(tape, x, time_embedding(cfg.d, t));
}

}  // namespace

DenoiserOutput forward_train(Tape* tape, const ModelConfig& cfg, const Parameters& params,
                             const DiffusionBatch& batch, const ForwardOptions& opt) {
  cfg.validate();
  const int l = static_cast<int>(batch.z.size());
  if (l == 0) throw std::invalid_argument("forward_train: empty sequence");
  if (l > cfg.max_len)
    throw std::invalid_argument("forward_train: sequence length " + std::to_string(l) +
                                " exceeds max_len " + std::to_string(cfg.max_len));
  if (batch.x.size() != static_cast<std::size_t>(l) ||
      batch.nu.size() != static_cast<std::size_t>(l))
    throw std::invalid_argument("forward_train: batch fields disagree in length");

  const bool dual = cfg.mode != Mode::mdlm;
  std::vector<int> tokens = batch.z;
  if (dual) tokens.insert(tokens.end(), batch.x.begin(), batch.x.end());

  Tensor x = embed_stream(tape, cfg, params, tokens, l, batch.t);
  JointMask stage1 = dual ? stage1_train_mask(batch.nu) : noise_mask(batch.nu);
  x = transformer_block(tape, cfg, params, "layer0", x, stage1);
  ChunkStage st = chunking_stage(tape, cfg, params, x, stage1, l, opt, /*infer=*/false);
  x = st.hidden;

  JointMask stage2 =
      dual ? joint_training_mask(st.chunks.c, batch.nu) : JointMask::all_true(l);
  for (int i = 1; i < cfg.n_layers; ++i)
    x = transformer_block(tape, cfg, params, "layer" + std::to_string(i), x, stage2);

  x = rmsnorm(tape, x, params.at("final_norm"), cfg.rms_eps);
  Tensor noisy = dual ? slice_rows(tape, x, 0, l) : x;

  DenoiserOutput out;
  out.logits = matmul_nt(tape, noisy, params.at("embed.tok"));
  out.chunks = std::move(st.chunks);
  out.aux = std::move(st.aux);
  return out;
}

DenoiserOutput forward_infer(const ModelConfig& cfg, const Parameters& params,
                             const std::vector<int>& z, double t,
                             const std::vector<int>* frozen_c) {
  cfg.validate();
  const int l = static_cast<int>(z.size());
  if (l == 0) throw std::invalid_argument("forward_infer: empty sequence");
  if (l > cfg.max_len)
    throw std::invalid_argument("forward_infer: sequence length " + std::to_string(l) +
                                " exceeds max_len " + std::to_string(cfg.max_len));
  const int mask_id = cfg.vocab_size - 1;
  std::vector<std::uint8_t> nu(l);
  for (int i = 0; i < l; ++i) nu[i] = z[i] == mask_id ? 1 : 0;

  ForwardOptions opt;
  opt.chunk_override = frozen_c;

  Tensor x = embed_stream(nullptr, cfg, params, z, l, t);
  JointMask stage1 = noise_mask(nu);
  x = transformer_block(nullptr, cfg, params, "layer0", x, stage1);
  ChunkStage st = chunking_stage(nullptr, cfg, params, x, stage1, l, opt, /*infer=*/true);
  x = st.hidden;

  JointMask stage2 = chunk_mask_inference(st.chunks.c);
  for (int i = 1; i < cfg.n_layers; ++i)
    x = transformer_block(nullptr, cfg, params, "layer" + std::to_string(i), x, stage2);

  x = rmsnorm(nullptr, x, params.at("final_norm"), cfg.rms_eps);

  DenoiserOutput out;
  out.logits = matmul_nt(nullptr, x, params.at("embed.tok"));
  out.chunks = std::move(st.chunks);
  out.aux = std::move(st.aux);
  return out;
}

}  // namespace dcdm
