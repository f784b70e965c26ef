#include "dcdm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "dcdm/checkpoint.hpp"
#include "dcdm/chunking.hpp"
#include "dcdm/corpus.hpp"
#include "dcdm/objective.hpp"

namespace dcdm {

OptimizerState OptimizerState::init(const Parameters& params) {
  OptimizerState state;
  for (const auto& name : params.order) {
    if (!Parameters::trainable(name)) continue;
    state.m.emplace_back(name, Tensor::zeros(params.at(name).shape));
    state.v.emplace_back(name, Tensor::zeros(params.at(name).shape));
  }
  return state;
}

double lr_schedule(long long step, double peak, long long warmup, long long max_steps) {
  if (step < 0 || step > max_steps)
    throw std::invalid_argument("lr_schedule: step " + std::to_string(step) +
                                " outside [0, " + std::to_string(max_steps) + "]");
  if (warmup < 0 || warmup >= max_steps)
    throw std::invalid_argument("lr_schedule: warmup must lie inside [0, max_steps)");
  if (warmup > 0 && step <= warmup)
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(max_steps - warmup);
  return peak * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
}

double clip_global_norm(std::vector<std::pair<std::string, Tensor>>& grads,
                        double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (int i = 0; i < g.numel(); ++i) sq += g.at(i) * g.at(i);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& [name, g] : grads)
      for (int i = 0; i < g.numel(); ++i) g.at(i) *= factor;
  }
  return norm;
}

void adamw_step(Parameters& params,
                const std::vector<std::pair<std::string, Tensor>>& grads,
                OptimizerState& state, double lr) {
  if (grads.size() != state.m.size())
    throw std::invalid_argument("adamw_step: got " + std::to_string(grads.size()) +
                                " grads for " + std::to_string(state.m.size()) +
                                " tracked parameters");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t idx = 0; idx < grads.size(); ++idx) {
    const auto& [name, g] = grads[idx];
    if (name != state.m[idx].first)
      throw std::invalid_argument("adamw_step: grad order mismatch at " + name);
    Tensor& p = params.at(name);
    Tensor& m = state.m[idx].second;
    Tensor& v = state.v[idx].second;
    if (g.shape != p.shape)
      throw std::invalid_argument("adamw_step: grad shape mismatch for " + name);
    for (int i = 0; i < g.numel(); ++i) {
      const double gi = g.at(i);
      if (!std::isfinite(gi))
        throw std::runtime_error("adamw_step: non-finite gradient in " + name);
      m.at(i) = state.beta1 * m.at(i) + (1.0 - state.beta1) * gi;
      v.at(i) = state.beta2 * v.at(i) + (1.0 - state.beta2) * gi * gi;
      const double mhat = m.at(i) / bc1;
      const double vhat = v.at(i) / bc2;
      p.at(i) -= lr * (mhat / (std::sqrt(vhat) + state.eps) +
                       state.weight_decay * p.at(i));
    }
  }
}

namespace {

std::string step_checkpoint_name(long long step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06lld.bin", step);
  return buf;
}

std::string format_metrics_row(long long step, double nelbo, double aux,
                               double violation, double lr, double seconds) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.3f\n", step,
                nelbo, aux, violation, lr, seconds);
  return buf;
}

}  // namespace

TrainResult train(const RunConfig& cfg, const std::string& out_dir,
                  std::uint64_t seed, const std::string& resume_from) {
  cfg.validate();
  const ModelConfig& model_cfg = cfg.model;
  const TrainConfig& train_cfg = cfg.train;
  const bool routed = model_cfg.mode == Mode::dcdm;
  const std::string config_text = serialize_config(cfg);

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/checkpoints");
  {
    std::ofstream snap(out_dir + "/config.txt", std::ios::trunc);
    snap << config_text;
    if (!snap.flush()) throw std::runtime_error("cannot write " + out_dir + "/config.txt");
  }

  Corpus corpus = load_corpus(train_cfg.corpus);
  if (corpus.size() < model_cfg.seq_len)
    throw std::runtime_error("corpus " + train_cfg.corpus + " ("
                             + std::to_string(corpus.size()) +
                             " bytes) is shorter than one sequence of " +
                             std::to_string(model_cfg.seq_len));

  Rng rng(seed);
  Parameters params = Parameters::init(model_cfg, rng);
  OptimizerState opt = OptimizerState::init(params);
  BiasState bias(model_cfg.k);
  bias.eta_b = train_cfg.eta_b;
  bias.update_interval = train_cfg.bias_interval;

  long long start_step = 0;
  double seconds_base = 0.0;
  if (!resume_from.empty()) {
    Checkpoint ckpt = read_checkpoint(resume_from);
    if (ckpt.config_text != config_text)
      throw std::runtime_error("resume config mismatch: " + resume_from);
    params = std::move(ckpt.params);
    TrainState ts = read_train_state(resume_from + ".state");
    start_step = ts.step;
    seconds_base = ts.seconds;
    rng.deserialize(ts.rng_state);
    if (static_cast<int>(ts.counts.size()) != model_cfg.k)
      throw std::runtime_error("resume bias counts mismatch: " + resume_from);
    bias.counts = ts.counts;
    for (int i = 0; i < model_cfg.k; ++i) bias.b[i] = params.at("chunk.bias").at(i);
    OptimizerState restored = OptimizerState::init(params);
    restored.step = ts.step;
    for (auto& [name, t] : ts.moments) {
      const bool is_m = name.rfind("m.", 0) == 0;
      const bool is_v = name.rfind("v.", 0) == 0;
      if (!is_m && !is_v)
        throw std::runtime_error("unexpected moment record " + name + ": " + resume_from);
      auto& side = is_m ? restored.m : restored.v;
      const std::string bare = name.substr(2);
      bool placed = false;
      for (auto& [pname, pt] : side)
        if (pname == bare) {
          if (pt.shape != t.shape)
            throw std::runtime_error("moment shape mismatch for " + name);
          pt = std::move(t);
          placed = true;
          break;
        }
      if (!placed)
        throw std::runtime_error("moment record for unknown parameter " + name);
    }
    opt = std::move(restored);
  }

  const std::string metrics_path = out_dir + "/metrics.csv";
  const bool fresh_metrics = start_step == 0 || !fs::exists(metrics_path) ||
                             fs::file_size(metrics_path) == 0;
  std::ofstream metrics(metrics_path,
                        start_step == 0 ? std::ios::trunc : std::ios::app);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path);
  if (fresh_metrics) metrics << "step,nelbo,aux,violation,lr,seconds\n";
  metrics.flush();

  NoiseSchedule sched;
  sched.eps_t = train_cfg.eps_t;

  auto save = [&](const std::string& ckpt_path, double cumulative_seconds) {
    write_checkpoint(ckpt_path, config_text, params);
    TrainState ts;
    ts.step = opt.step;
    ts.seconds = cumulative_seconds;
    ts.rng_state = rng.serialize();
    ts.counts = bias.counts;
    for (const auto& [name, t] : opt.m) ts.moments.emplace_back("m." + name, t);
    for (const auto& [name, t] : opt.v) ts.moments.emplace_back("v." + name, t);
    write_train_state(ckpt_path + ".state", ts);
  };

  TrainResult result;
  result.metrics_path = metrics_path;
  const auto run_start = std::chrono::steady_clock::now();

  for (long long step = start_step + 1; step <= train_cfg.max_steps; ++step) {
    const double lr =
        lr_schedule(step, train_cfg.peak_lr, train_cfg.warmup_steps, train_cfg.max_steps);

    Tape tape;
    std::vector<std::pair<std::string, Tensor>> watched;
    for (const auto& name : params.order) {
      if (!Parameters::trainable(name)) continue;
      watched.emplace_back(name, params.at(name));
      tape.watch(watched.back().second);
    }
    Parameters live;
    std::size_t w = 0;
    for (const auto& name : params.order)
      live.add(name, Parameters::trainable(name) ? watched[w++].second
                                                 : params.at(name));

    Tensor loss_sum = Tensor::zeros({1});
    double nelbo_sum = 0.0, aux_sum = 0.0;
    for (int b = 0; b < train_cfg.batch_size; ++b) {
      std::vector<int> window = sample_window(corpus, model_cfg.seq_len, rng);
      const double t = sched.eps_t + (1.0 - sched.eps_t) * rng.uniform();
      DiffusionBatch batch = corrupt(sched, window, t, rng, model_cfg.vocab_size - 1);
      ForwardOptions fopt;
      fopt.rng = &rng;
      fopt.bias = routed ? &bias : nullptr;
      DenoiserOutput out = forward_train(&tape, model_cfg, live, batch, fopt);
      LossBreakdown lb = total_loss(&tape, out, batch, model_cfg);
      loss_sum = add(&tape, loss_sum, lb.total);
      nelbo_sum += lb.nelbo.at(0);
      aux_sum += lb.aux.at(0);
    }
    Tensor loss = scale(&tape, loss_sum, 1.0 / train_cfg.batch_size);
    ensure_finite(loss, "train: step loss");

    auto grad_map = tape.backward(loss);
    std::vector<std::pair<std::string, Tensor>> grads;
    grads.reserve(watched.size());
    for (auto& [name, t] : watched) {
      auto it = grad_map.find(t.node);
      grads.emplace_back(name, it != grad_map.end() ? it->second
                                                    : Tensor::zeros(t.shape));
    }
    clip_global_norm(grads, train_cfg.clip_norm);
    adamw_step(params, grads, opt, lr);

    double violation = 0.0;
    if (routed) {
      long long total = 0;
      for (long long c : bias.counts) total += c;
      if (total > 0) violation = cluster_violation(bias.counts);
      if (step % train_cfg.bias_interval == 0) {
        bias_update(bias);
        Tensor& stored = params.at("chunk.bias");
        for (int i = 0; i < model_cfg.k; ++i) stored.at(i) = bias.b[i];
      }
    }

    const double nelbo = nelbo_sum / train_cfg.batch_size;
    const double aux = aux_sum / train_cfg.batch_size;
    const double seconds =
        seconds_base +
        std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start)
            .count();
    metrics << format_metrics_row(step, nelbo, aux, violation, lr, seconds);
    metrics.flush();

    result.final_nelbo = nelbo;
    result.final_violation = violation;

    if (step % train_cfg.checkpoint_every == 0 && step != train_cfg.max_steps)
      save(out_dir + "/checkpoints/" + step_checkpoint_name(step), seconds);
  }

  const double total_seconds =
      seconds_base +
      std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start)
          .count();
  result.opt_steps = opt.step;
  result.bias_updates = bias.updates;
  result.checkpoint_path = out_dir + "/checkpoints/final.bin";
  result.state_path = result.checkpoint_path + ".state";
  save(result.checkpoint_path, total_seconds);
  return result;
}

}  // namespace dcdm
