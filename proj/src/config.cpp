#include "dcdm/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace dcdm {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size: must be positive");
  if (max_steps < 1) throw std::invalid_argument("max_steps: must be positive");
  if (warmup_steps < 0 || warmup_steps > max_steps)
    throw std::invalid_argument("warmup_steps: need 0 <= warmup_steps <= max_steps");
  if (peak_lr <= 0.0) throw std::invalid_argument("peak_lr: must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay: must be >= 0");
  if (clip_norm <= 0.0) throw std::invalid_argument("clip_norm: must be positive");
  if (eps_t <= 0.0 || eps_t >= 1.0)
    throw std::invalid_argument("eps_t: must lie strictly inside (0, 1)");
  if (eta_b < 0.0) throw std::invalid_argument("eta_b: must be >= 0");
  if (bias_interval < 1) throw std::invalid_argument("bias_interval: must be positive");
  if (checkpoint_every < 1) throw std::invalid_argument("checkpoint_every: must be positive");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    int n = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return n;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
  static const std::unordered_map<std::string, Setter> keys = {
      {"mode", [](RunConfig& c, const std::string&, const std::string& v) { c.model.mode = parse_mode(v); }},
      {"d", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.d = to_int(k, v); }},
      {"n_layers", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.n_layers = to_int(k, v); }},
      {"n_heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.n_heads = to_int(k, v); }},
      {"k", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.k = to_int(k, v); }},
      {"h", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.h = to_int(k, v); }},
      {"block_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.block_size = to_int(k, v); }},
      {"max_len", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.max_len = to_int(k, v); }},
      {"seq_len", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.seq_len = to_int(k, v); }},
      {"d_ff", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.d_ff = to_int(k, v); }},
      {"lambda_chunk", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.lambda_chunk = to_double(k, v); }},
      {"mu_init_skew", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.mu_init_skew = to_double(k, v); }},
      {"batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = to_int(k, v); }},
      {"max_steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.max_steps = to_int(k, v); }},
      {"warmup_steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.warmup_steps = to_int(k, v); }},
      {"peak_lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.peak_lr = to_double(k, v); }},
      {"weight_decay", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.weight_decay = to_double(k, v); }},
      {"clip_norm", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.clip_norm = to_double(k, v); }},
      {"eps_t", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.eps_t = to_double(k, v); }},
      {"eta_b", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.eta_b = to_double(k, v); }},
      {"bias_interval", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.bias_interval = to_int(k, v); }},
      {"checkpoint_every", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.checkpoint_every = to_int(k, v); }},
      {"corpus", [](RunConfig& c, const std::string&, const std::string& v) { c.train.corpus = v; }},
  };

  RunConfig cfg;
  std::unordered_set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key=value: '" + s + "'");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    auto it = keys.find(key);
    if (it == keys.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
    if (!seen.insert(key).second)
      throw std::invalid_argument("config: duplicate key '" + key + "'");
    it->second(cfg, key, value);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "mode=" << mode_name(cfg.model.mode) << "\n"
      << "d=" << cfg.model.d << "\n"
      << "n_layers=" << cfg.model.n_layers << "\n"
      << "n_heads=" << cfg.model.n_heads << "\n"
      << "k=" << cfg.model.k << "\n"
      << "h=" << cfg.model.h << "\n"
      << "block_size=" << cfg.model.block_size << "\n"
      << "max_len=" << cfg.model.max_len << "\n"
      << "seq_len=" << cfg.model.seq_len << "\n"
      << "d_ff=" << cfg.model.d_ff << "\n"
      << "lambda_chunk=" << fmt(cfg.model.lambda_chunk) << "\n"
      << "mu_init_skew=" << fmt(cfg.model.mu_init_skew) << "\n"
      << "batch_size=" << cfg.train.batch_size << "\n"
      << "max_steps=" << cfg.train.max_steps << "\n"
      << "warmup_steps=" << cfg.train.warmup_steps << "\n"
      << "peak_lr=" << fmt(cfg.train.peak_lr) << "\n"
      << "weight_decay=" << fmt(cfg.train.weight_decay) << "\n"
      << "clip_norm=" << fmt(cfg.train.clip_norm) << "\n"
      << "eps_t=" << fmt(cfg.train.eps_t) << "\n"
      << "eta_b=" << fmt(cfg.train.eta_b) << "\n"
      << "bias_interval=" << cfg.train.bias_interval << "\n"
      << "checkpoint_every=" << cfg.train.checkpoint_every << "\n"
      << "corpus=" << cfg.train.corpus << "\n";
  return out.str();
}

}  // namespace dcdm
