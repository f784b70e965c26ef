#include "dcdm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dcdm/noise.hpp"
#include "dcdm/rng.hpp"

namespace dcdm {

namespace {

void validate_job(const ModelConfig& cfg, const SampleJob& job) {
  const int mask_id = cfg.vocab_size - 1;
  if (job.length < 1 || job.length > cfg.max_len)
    throw std::invalid_argument("generate: length " + std::to_string(job.length) +
                                " outside [1, max_len=" + std::to_string(cfg.max_len) + "]");
  if (static_cast<int>(job.prompt.size()) >= job.length)
    throw std::invalid_argument("generate: prompt of " +
                                std::to_string(job.prompt.size()) +
                                " tokens leaves nothing to generate at length " +
                                std::to_string(job.length));
  for (int tok : job.prompt)
    if (tok < 0 || tok >= mask_id)
      throw std::invalid_argument("generate: prompt token " + std::to_string(tok) +
                                  " outside [0, " + std::to_string(mask_id) + ")");
  if (job.t_inner < 1)
    throw std::invalid_argument("generate: t_inner must be at least 1");
  if (job.temperature < 0.0)
    throw std::invalid_argument("generate: temperature must be nonnegative");
}

double masked_fraction(const std::vector<int>& z, int mask_id, double eps_t) {
  long masked = 0;
  for (int tok : z) masked += tok == mask_id;
  return std::max(eps_t, static_cast<double>(masked) / static_cast<double>(z.size()));
}

// max-softmax confidence and temperature sampling over real tokens only
// (the mask id never appears in output).
struct PositionChoice {
  double confidence = 0.0;
  int argmax = 0;
};

PositionChoice position_choice(const Tensor& logits, int row, int mask_id) {
  PositionChoice choice;
  double best = logits.at(row, 0);
  int best_id = 0;
  for (int v = 1; v < mask_id; ++v)
    if (logits.at(row, v) > best) {
      best = logits.at(row, v);
      best_id = v;
    }
  double denom = 0.0;
  for (int v = 0; v < mask_id; ++v) denom += std::exp(logits.at(row, v) - best);
  choice.confidence = 1.0 / denom;
  choice.argmax = best_id;
  return choice;
}

int sample_token(const Tensor& logits, int row, int mask_id, double temperature,
                 Rng& rng) {
  if (temperature == 0.0) return position_choice(logits, row, mask_id).argmax;
  double best = logits.at(row, 0);
  for (int v = 1; v < mask_id; ++v) best = std::max(best, logits.at(row, v));
  double denom = 0.0;
  for (int v = 0; v < mask_id; ++v)
    denom += std::exp((logits.at(row, v) - best) / temperature);
  const double u = rng.uniform() * denom;
  double cum = 0.0;
  for (int v = 0; v < mask_id; ++v) {
    cum += std::exp((logits.at(row, v) - best) / temperature);
    if (u < cum) return v;
  }
  return mask_id - 1;  // u landed on the top edge after rounding
}

// One denoising round over `candidates` (masked positions of the active
// chunk): rank by confidence, commit the top commit_n with sampled tokens.
void run_round(const ModelConfig& cfg, const Parameters& params,
               std::vector<int>& z, const std::vector<int>& frozen_c,
               const std::vector<int>& candidates, int commit_n, int chunk_id,
               double temperature, double eps_t, Rng& rng, SampleTrace* trace) {
  const int mask_id = cfg.vocab_size - 1;
  const double t = masked_fraction(z, mask_id, eps_t);
  DenoiserOutput out = forward_infer(cfg, params, z, t, &frozen_c);

  std::vector<std::pair<double, int>> ranked;  // (-confidence, position)
  ranked.reserve(candidates.size());
  for (int pos : candidates)
    ranked.emplace_back(-position_choice(out.logits, pos, mask_id).confidence, pos);
  std::sort(ranked.begin(), ranked.end());

  RoundTrace round;
  round.chunk = chunk_id;
  const int n = std::min<int>(commit_n, static_cast<int>(ranked.size()));
  round.min_selected_confidence = n > 0 ? -ranked[n - 1].first : 0.0;
  round.max_unselected_confidence =
      n < static_cast<int>(ranked.size()) ? -ranked[n].first : -1.0;
  for (int i = 0; i < n; ++i) {
    const int pos = ranked[i].second;
    const int tok = sample_token(out.logits, pos, mask_id, temperature, rng);
    z[pos] = tok;
    round.committed.emplace_back(pos, tok);
  }
  std::sort(round.committed.begin(), round.committed.end());
  if (trace) trace->rounds.push_back(std::move(round));
}

std::vector<int> generate_frozen(const ModelConfig& cfg, const Parameters& params,
                                 const SampleJob& job, SampleTrace* trace) {
  const int mask_id = cfg.vocab_size - 1;
  NoiseSchedule sched;
  std::vector<int> z(job.length, mask_id);
  std::copy(job.prompt.begin(), job.prompt.end(), z.begin());

  const double t0 = masked_fraction(z, mask_id, sched.eps_t);
  DenoiserOutput routing = forward_infer(cfg, params, z, t0);
  const std::vector<int> frozen_c = routing.chunks.c;
  if (trace) trace->chunks = frozen_c;

  Rng rng(job.seed);
  const int kmax = *std::max_element(frozen_c.begin(), frozen_c.end());
  for (int k = 1; k <= kmax; ++k) {
    std::vector<int> masked;
    for (int i = 0; i < job.length; ++i)
      if (frozen_c[i] == k && z[i] == mask_id) masked.push_back(i);
    if (masked.empty()) continue;  // absent ids and prompt-only chunks

    int remaining = static_cast<int>(masked.size());
    for (int round = 0; round < job.t_inner && remaining > 0; ++round) {
      const int rounds_left = job.t_inner - round;
      const int commit_n = (remaining + rounds_left - 1) / rounds_left;
      std::vector<int> candidates;
      for (int pos : masked)
        if (z[pos] == mask_id) candidates.push_back(pos);
      run_round(cfg, params, z, frozen_c, candidates, commit_n, k,
                job.temperature, sched.eps_t, rng, trace);
      remaining -= commit_n;
    }
    for (int pos : masked)
      if (z[pos] == mask_id)
        throw std::logic_error("generate: position " + std::to_string(pos) +
                               " still masked after the final round of chunk " +
                               std::to_string(k));
  }
  return z;
}

std::vector<int> generate_reroute(const ModelConfig& cfg, const Parameters& params,
                                  const SampleJob& job, SampleTrace* trace) {
  const int mask_id = cfg.vocab_size - 1;
  NoiseSchedule sched;
  std::vector<int> z(job.length, mask_id);
  std::copy(job.prompt.begin(), job.prompt.end(), z.begin());

  Rng rng(job.seed);
  for (int round = 0; round < job.length; ++round) {
    long remaining_total = std::count(z.begin(), z.end(), mask_id);
    if (remaining_total == 0) break;
    const double t = masked_fraction(z, mask_id, sched.eps_t);
    DenoiserOutput routing = forward_infer(cfg, params, z, t);
    const std::vector<int>& c = routing.chunks.c;
    if (trace && round == 0) trace->chunks = c;

    int active = 0;
    std::vector<int> candidates;
    const int kmax = *std::max_element(c.begin(), c.end());
    for (int k = 1; k <= kmax && candidates.empty(); ++k) {
      for (int i = 0; i < job.length; ++i)
        if (c[i] == k && z[i] == mask_id) candidates.push_back(i);
      active = k;
    }
    const int rounds_left = std::max(1, job.t_inner - round);
    const int commit_n =
        static_cast<int>((remaining_total + rounds_left - 1) / rounds_left);
    run_round(cfg, params, z, c, candidates, commit_n, active, job.temperature,
              sched.eps_t, rng, trace);
  }
  return z;
}

}  // namespace

std::vector<int> generate(const ModelConfig& cfg, const Parameters& params,
                          const SampleJob& job, SampleTrace* trace) {
  validate_job(cfg, job);
  return job.reroute ? generate_reroute(cfg, params, job, trace)
                     : generate_frozen(cfg, params, job, trace);
}

std::vector<int> generate_mdlm(const ModelConfig& cfg, const Parameters& params,
                               const SampleJob& job, SampleTrace* trace) {
  if (cfg.mode != Mode::mdlm)
    throw std::invalid_argument("generate_mdlm: config mode is not mdlm");
  return generate(cfg, params, job, trace);
}

}  // namespace dcdm
