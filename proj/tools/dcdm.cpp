#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcdm/ablate.hpp"
#include "dcdm/checkpoint.hpp"
#include "dcdm/config.hpp"
#include "dcdm/corpus.hpp"
#include "dcdm/sampler.hpp"
#include "dcdm/svg.hpp"
#include "dcdm/trainer.hpp"
#include "dcdm/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Valid UTF-8 passes through untouched; anything else becomes a \xNN escape
// so generated bytes are always safe to print.
std::string escape_invalid_utf8(const std::vector<int>& tokens) {
  std::vector<unsigned char> b;
  b.reserve(tokens.size());
  for (int t : tokens) b.push_back(static_cast<unsigned char>(t));

  std::string out;
  auto cont = [&](std::size_t j) { return j < b.size() && (b[j] & 0xc0) == 0x80; };
  std::size_t i = 0;
  while (i < b.size()) {
    const unsigned char c = b[i];
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
      ++i;
      continue;
    }
    int need = -1;
    if ((c & 0xe0) == 0xc0 && c >= 0xc2) need = 1;
    else if ((c & 0xf0) == 0xe0) need = 2;
    else if ((c & 0xf8) == 0xf0 && c <= 0xf4) need = 3;
    bool ok = need > 0;
    for (int j = 1; ok && j <= need; ++j) ok = cont(i + j);
    if (ok && need == 2) {
      if (c == 0xe0 && b[i + 1] < 0xa0) ok = false;  // overlong
      if (c == 0xed && b[i + 1] >= 0xa0) ok = false;  // surrogate range
    }
    if (ok && need == 3) {
      if (c == 0xf0 && b[i + 1] < 0x90) ok = false;  // overlong
      if (c == 0xf4 && b[i + 1] >= 0x90) ok = false;  // beyond U+10FFFF
    }
    if (ok) {
      out.append(reinterpret_cast<const char*>(&b[i]), need + 1);
      i += static_cast<std::size_t>(need) + 1;
    } else {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "\\x%02x", c);
      out += buf;
      ++i;
    }
  }
  return out;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::uint64_t seed, const std::string& resume) {
  dcdm::RunConfig cfg;
  try {
    cfg = dcdm::load_config(config_path);
    cfg.validate();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }
  try {
    dcdm::TrainResult tr = dcdm::train(cfg, out_dir, seed, resume);
    fs::create_directories(out_dir + "/plots");
    dcdm::MetricsCurve curve = dcdm::read_metrics_csv(tr.metrics_path);
    dcdm::write_svg(out_dir + "/plots/curves.svg",
                    dcdm::metrics_chart({dcdm::mode_name(cfg.model.mode)}, {curve}));
    std::printf("trained %lld steps  nelbo %.6f  violation %.6f\n", tr.opt_steps,
                tr.final_nelbo, tr.final_violation);
    std::printf("checkpoint %s\n", tr.checkpoint_path.c_str());
    std::printf("metrics    %s\n", tr.metrics_path.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "train error: %s\n", e.what());
    return 2;
  }
}

int cmd_sample(const std::string& ckpt_path, const std::string& prompt, int length,
               int steps, double temperature, std::uint64_t seed, bool reroute) {
  try {
    dcdm::Checkpoint ckpt = dcdm::read_checkpoint(ckpt_path);
    dcdm::RunConfig cfg = dcdm::parse_config(ckpt.config_text);

    dcdm::SampleJob job;
    for (unsigned char byte : prompt) job.prompt.push_back(byte);
    job.length = length;
    job.t_inner = steps;
    job.temperature = temperature;
    job.seed = seed;
    job.reroute = reroute;

    std::vector<int> out = dcdm::generate(cfg.model, ckpt.params, job);
    std::printf("%s\n", escape_invalid_utf8(out).c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sample error: %s\n", e.what());
    return 2;
  }
}

int cmd_verify(const std::string& mode, const std::string& config_path,
               std::uint64_t seed, bool sabotage, bool json_out) {
  if (!config_path.empty()) {
    try {
      dcdm::load_config(config_path).validate();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "config error: %s\n", e.what());
      return 2;
    }
  }

  if (mode == "gradcheck") {
    dcdm::GradcheckResult r = dcdm::run_gradcheck(seed);
    if (json_out) {
      json j{{"mode", "gradcheck"},        {"pass", r.pass},
             {"max_rel_err", r.max_rel_err}, {"worst_param", r.worst_param},
             {"worst_index", r.worst_index}, {"param_count", r.param_count},
             {"seconds", r.seconds}};
      std::printf("%s\n", j.dump(2).c_str());
    } else {
      std::printf("gradcheck: %lld parameters, max rel err %.3e at %s[%ld] (%.2fs)\n",
                  r.param_count, r.max_rel_err, r.worst_param.c_str(), r.worst_index,
                  r.seconds);
      std::printf("%s\n", r.pass ? "PASS" : "FAIL");
    }
    return r.pass ? 0 : 1;
  }

  if (mode == "leakage") {
    dcdm::LeakageFuzzResult r = dcdm::run_leakage_fuzz(1000, 100, seed, sabotage);
    if (json_out) {
      json j{{"mode", "leakage"},
             {"pass", r.pass},
             {"mask_instances", r.mask_instances},
             {"perturbation_runs", r.perturbation_runs},
             {"violations", r.violations},
             {"first_failure", r.first_failure},
             {"seconds", r.seconds}};
      std::printf("%s\n", j.dump(2).c_str());
    } else {
      std::printf("leakage: %d mask instances, %d perturbation runs, %d violations (%.2fs)\n",
                  r.mask_instances, r.perturbation_runs, r.violations, r.seconds);
      if (!r.first_failure.empty()) std::printf("%s\n", r.first_failure.c_str());
      std::printf("%s\n", r.pass ? "PASS" : "FAIL");
    }
    return r.pass ? 0 : 1;
  }

  dcdm::DegenerateResult r = dcdm::run_degenerate_checks(seed);
  if (json_out) {
    json j{{"mode", "degenerate"},
           {"pass", r.pass},
           {"positional_ids_equal", r.positional_ids_equal},
           {"positional_masks_equal", r.positional_masks_equal},
           {"positional_logit_diff", r.positional_logit_diff},
           {"positional_loss_diff", r.positional_loss_diff},
           {"single_cluster_loss_diff", r.single_cluster_loss_diff},
           {"seconds", r.seconds}};
    std::printf("%s\n", j.dump(2).c_str());
  } else {
    std::printf("degenerate: positional ids %s, masks %s, logit diff %.3e, "
                "loss diff %.3e, single-cluster diff %.3e (%.2fs)\n",
                r.positional_ids_equal ? "equal" : "DIFFER",
                r.positional_masks_equal ? "equal" : "DIFFER",
                r.positional_logit_diff, r.positional_loss_diff,
                r.single_cluster_loss_diff, r.seconds);
    std::printf("%s\n", r.pass ? "PASS" : "FAIL");
  }
  return r.pass ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, const std::vector<int>& k_list,
               const std::vector<int>& h_list, int steps, const std::string& out_dir,
               std::uint64_t seed) {
  dcdm::RunConfig base;
  try {
    base = dcdm::load_config(config_path);
    base.validate();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }
  if (k_list.empty() == h_list.empty()) {
    std::fprintf(stderr, "ablate-k: pass exactly one of --k-list or --h-list\n");
    return 2;
  }

  const bool sweep_k = !k_list.empty();
  std::vector<dcdm::AblationMember> members;
  for (int value : sweep_k ? k_list : h_list) {
    dcdm::AblationMember m;
    m.label = std::to_string(value);
    m.cfg = base;
    (sweep_k ? m.cfg.model.k : m.cfg.model.h) = value;
    if (steps > 0) {
      m.cfg.train.max_steps = steps;
      m.cfg.train.warmup_steps = std::min(m.cfg.train.warmup_steps, steps / 10);
    }
    members.push_back(std::move(m));
  }

  try {
    dcdm::AblationResult res =
        dcdm::run_ablation(members, sweep_k ? "k" : "h", out_dir, seed);
    for (const auto& r : res.rows) {
      std::printf("%s=%s  nelbo %.6f  violation %.6f\n", sweep_k ? "k" : "h",
                  r.label.c_str(), r.final_nelbo, r.final_violation);
    }
    std::printf("summary %s\nplot    %s\n", res.csv_path.c_str(), res.svg_path.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ablate error: %s\n", e.what());
    return 2;
  }
}

int cmd_inspect(const std::string& ckpt_path, const std::string& text, bool json_out) {
  try {
    dcdm::Checkpoint ckpt = dcdm::read_checkpoint(ckpt_path);
    dcdm::RunConfig cfg = dcdm::parse_config(ckpt.config_text);
    if (static_cast<int>(text.size()) > cfg.model.max_len) {
      std::fprintf(stderr, "inspect error: text is %zu bytes, max_len is %d\n",
                   text.size(), cfg.model.max_len);
      return 2;
    }

    std::vector<int> ids;
    if (!text.empty()) {
      std::vector<int> z;
      for (unsigned char byte : text) z.push_back(byte);
      dcdm::DenoiserOutput out = dcdm::forward_infer(
          cfg.model, ckpt.params, z, dcdm::NoiseSchedule{}.eps_t);
      ids = out.chunks.c;
    }

    std::map<int, int> sizes;
    for (int id : ids) ++sizes[id];

    if (json_out) {
      json j;
      j["length"] = ids.size();
      j["ids"] = ids;
      json s = json::object();
      for (const auto& [id, n] : sizes) s[std::to_string(id)] = n;
      j["sizes"] = s;
      std::printf("%s\n", j.dump(2).c_str());
      return 0;
    }

    for (std::size_t i = 0; i < ids.size(); ++i) {
      const unsigned char c = static_cast<unsigned char>(text[i]);
      char repr[8];
      if (c >= 0x20 && c < 0x7f) std::snprintf(repr, sizeof(repr), "'%c'", c);
      else std::snprintf(repr, sizeof(repr), "0x%02x", c);
      std::printf("%4zu  %-4s  chunk %d\n", i, repr, ids[i]);
    }
    std::printf("chunk sizes:\n");
    for (const auto& [id, n] : sizes) {
      std::printf("  %2d: %4d ", id, n);
      for (int b = 0; b < n; ++b) std::putchar('#');
      std::putchar('\n');
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "inspect error: %s\n", e.what());
    return 2;
  }
}

int cmd_make_corpus(const std::string& out_path, long long bytes, std::uint64_t seed) {
  try {
    dcdm::write_synthetic_corpus(out_path, static_cast<std::size_t>(bytes), seed);
    std::printf("wrote %lld bytes to %s\n", bytes, out_path.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "make-corpus error: %s\n", e.what());
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic chunking diffusion workbench"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume, ckpt_path, prompt, text, verify_mode;
  std::uint64_t seed = 0;
  int length = 64, steps = 8, ablate_steps = 0;
  double temperature = 1.0;
  bool reroute = false, sabotage = false, json_out = false;
  std::vector<int> k_list, h_list;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("config", config_path, "config file")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--seed", seed, "rng seed");
  train->add_option("--resume", resume, "checkpoint to continue from")
      ->check(CLI::ExistingFile);

  auto* sample = app.add_subcommand("sample", "generate text from a checkpoint");
  sample->add_option("--checkpoint", ckpt_path, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  sample->add_option("--prompt", prompt, "utf-8 prompt, kept verbatim");
  sample->add_option("--length", length, "total sequence length");
  sample->add_option("--steps", steps, "denoising rounds per chunk");
  sample->add_option("--temperature", temperature, "token sampling temperature");
  sample->add_option("--seed", seed, "rng seed");
  sample->add_flag("--reroute", reroute, "experimental: reassign chunks every round");

  auto* verify = app.add_subcommand("verify", "run a self-check suite");
  verify->add_option("--mode", verify_mode, "gradcheck | leakage | degenerate")
      ->required()
      ->check(CLI::IsMember({"gradcheck", "leakage", "degenerate"}));
  verify->add_option("config", config_path, "optional config to validate first")
      ->check(CLI::ExistingFile);
  verify->add_option("--seed", seed, "rng seed");
  verify->add_flag("--sabotage-clause2", sabotage,
                   "open an illegal mask edge; the verifier must catch it");
  verify->add_flag("--json", json_out, "machine-readable report");

  auto* ablate = app.add_subcommand("ablate-k", "train one model per swept value");
  ablate->add_option("config", config_path, "base config file")
      ->required()
      ->check(CLI::ExistingFile);
  ablate->add_option("--k-list", k_list, "cluster counts to sweep")->delimiter(',');
  ablate->add_option("--h-list", h_list, "subspace widths to sweep")->delimiter(',');
  ablate->add_option("--steps", ablate_steps,
                     "override max_steps (warmup capped at a tenth)");
  ablate->add_option("--out", out_dir, "output directory")->required();
  ablate->add_option("--seed", seed, "rng seed");

  auto* inspect = app.add_subcommand("inspect-chunks", "annotate text with chunk ids");
  inspect->add_option("--checkpoint", ckpt_path, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  inspect->add_option("--text", text, "utf-8 text to route");
  inspect->add_flag("--json", json_out, "machine-readable report");

  auto* corpus = app.add_subcommand("make-corpus", "write a synthetic text corpus");
  long long corpus_bytes = 1 << 20;
  corpus->add_option("--out", out_dir, "output file")->required();
  corpus->add_option("--bytes", corpus_bytes, "minimum size in bytes")
      ->check(CLI::PositiveNumber);
  corpus->add_option("--seed", seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (app.got_subcommand(train)) return cmd_train(config_path, out_dir, seed, resume);
  if (app.got_subcommand(sample))
    return cmd_sample(ckpt_path, prompt, length, steps, temperature, seed, reroute);
  if (app.got_subcommand(verify))
    return cmd_verify(verify_mode, config_path, seed, sabotage, json_out);
  if (app.got_subcommand(ablate))
    return cmd_ablate(config_path, k_list, h_list, ablate_steps, out_dir, seed);
  if (app.got_subcommand(inspect)) return cmd_inspect(ckpt_path, text, json_out);
  if (app.got_subcommand(corpus)) return cmd_make_corpus(out_dir, corpus_bytes, seed);
  return 2;
}
