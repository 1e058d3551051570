#pragma once

#include "nap/metrics.hpp"

#include <charconv>
#include <climits>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace nap::cfg {

// Everything the pipeline subcommands need, flattened into `section.key`
// entries. Defaults come from the named profile; `desk` is the scale that
// runs end to end on a laptop, `paper` stores the published values.
struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 7;
  std::string repr = "compact";
  bool sim_noise = true;

  int expert_episodes = 300;
  int expert_episode_len = 400;

  int codec_z_dim = 4;
  int codec_epochs = 200;
  bool codec_identity = false;
  std::vector<int> codec_hidden = {64, 64};

  int prior_chunk_frames = 16;
  int prior_history = 4;
  int prior_epochs = 150;
  int prior_batch = 256;
  double prior_lr = 1e-3;
  std::vector<int> prior_hidden = {256, 256, 128};

  double ppo_lr = 2e-4;
  double ppo_gamma = 0.99;
  double ppo_gae_tau = 0.95;
  double ppo_clip_eps = 0.2;
  int ppo_horizon = 32;
  int ppo_minibatch = 256;
  int ppo_mini_epochs = 8;
  int ppo_n_envs = 32;
  int ppo_epochs = 4000;
  double ppo_value_coef = 5.0;
  double ppo_bound_coef = 10.0;
  double ppo_bound = 1.0;
  double ppo_kl_stop = 0.03;
  double ppo_lr_final_frac = 0.25;
  std::vector<int> policy_trunk = {512, 256, 128};
  std::vector<int> policy_task = {128, 64};

  double curriculum_threshold1 = 50.0;
  double curriculum_threshold2 = 100.0;

  int eval_episodes = 200;
  int eval_level = 0;
  int eval_guide_steps = 10;
  double eval_guide_rate = 0.02;
};

inline RunConfig make_profile(const std::string& name) {
  RunConfig c;
  c.profile = name;
  if (name == "desk") return c;
  if (name == "paper") {
    c.expert_episodes = 2000;
    c.expert_episode_len = 600;
    c.codec_epochs = 500;
    c.prior_epochs = 1000;
    c.ppo_lr = 2e-5;
    c.ppo_minibatch = 4096;
    c.ppo_n_envs = 256;
    c.ppo_epochs = 2000;
    c.ppo_kl_stop = 0.0;
    c.ppo_lr_final_frac = 1.0;
    c.policy_trunk = {2048, 1024, 512};
    c.policy_task = {512, 256};
    c.eval_episodes = 1000;
    return c;
  }
  throw ConfigError("unknown profile: " + name);
}

namespace detail {

inline long long parse_ll(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

inline int parse_int(const std::string& key, const std::string& v) {
  long long x = parse_ll(key, v);
  if (x < INT_MIN || x > INT_MAX) throw ConfigError(key + ": out of range");
  return static_cast<int>(x);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError(key + ": expected 0/1, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key,
                                       const std::string& v) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    std::size_t comma = v.find(',', start);
    std::string item =
        v.substr(start, comma == std::string::npos ? comma : comma - start);
    std::size_t b = item.find_first_not_of(" \t");
    std::size_t e = item.find_last_not_of(" \t");
    item = b == std::string::npos ? std::string() : item.substr(b, e - b + 1);
    if (item.empty()) throw ConfigError(key + ": empty list entry");
    out.push_back(parse_int(key, item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string fmt_int_list(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

struct KeyDef {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<KeyDef>& key_defs() {
  auto i = [](int RunConfig::* f, const char* key) {
    return KeyDef{key,
                  [f](const RunConfig& c) { return std::to_string(c.*f); },
                  [f, key](RunConfig& c, const std::string& v) {
                    c.*f = parse_int(key, v);
                  }};
  };
  auto d = [](double RunConfig::* f, const char* key) {
    return KeyDef{key, [f](const RunConfig& c) { return fmt_double(c.*f); },
                  [f, key](RunConfig& c, const std::string& v) {
                    c.*f = parse_double(key, v);
                  }};
  };
  auto b = [](bool RunConfig::* f, const char* key) {
    return KeyDef{key,
                  [f](const RunConfig& c) { return c.*f ? "1" : "0"; },
                  [f, key](RunConfig& c, const std::string& v) {
                    c.*f = parse_bool(key, v);
                  }};
  };
  auto l = [](std::vector<int> RunConfig::* f, const char* key) {
    return KeyDef{key, [f](const RunConfig& c) { return fmt_int_list(c.*f); },
                  [f, key](RunConfig& c, const std::string& v) {
                    c.*f = parse_int_list(key, v);
                  }};
  };
  static const std::vector<KeyDef> defs = {
      {"run.profile", [](const RunConfig& c) { return c.profile; },
       [](RunConfig& c, const std::string& v) {
         if (v != "desk" && v != "paper")
           throw ConfigError("run.profile: unknown profile '" + v + "'");
         c.profile = v;
       }},
      {"run.seed",
       [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& v) {
         c.seed = parse_u64("run.seed", v);
       }},
      {"run.repr", [](const RunConfig& c) { return c.repr; },
       [](RunConfig& c, const std::string& v) {
         data::repr_from_string(v);  // validates
         c.repr = v;
       }},
      b(&RunConfig::sim_noise, "sim.noise_enabled"),
      i(&RunConfig::expert_episodes, "expert.episodes"),
      i(&RunConfig::expert_episode_len, "expert.episode_len"),
      i(&RunConfig::codec_z_dim, "codec.z_dim"),
      i(&RunConfig::codec_epochs, "codec.epochs"),
      b(&RunConfig::codec_identity, "codec.identity"),
      l(&RunConfig::codec_hidden, "codec.hidden"),
      i(&RunConfig::prior_chunk_frames, "prior.chunk_frames"),
      i(&RunConfig::prior_history, "prior.history"),
      i(&RunConfig::prior_epochs, "prior.epochs"),
      i(&RunConfig::prior_batch, "prior.batch"),
      d(&RunConfig::prior_lr, "prior.lr"),
      l(&RunConfig::prior_hidden, "prior.hidden"),
      d(&RunConfig::ppo_lr, "ppo.lr"),
      d(&RunConfig::ppo_gamma, "ppo.gamma"),
      d(&RunConfig::ppo_gae_tau, "ppo.gae_tau"),
      d(&RunConfig::ppo_clip_eps, "ppo.clip_eps"),
      i(&RunConfig::ppo_horizon, "ppo.horizon"),
      i(&RunConfig::ppo_minibatch, "ppo.minibatch"),
      i(&RunConfig::ppo_mini_epochs, "ppo.mini_epochs"),
      i(&RunConfig::ppo_n_envs, "ppo.n_envs"),
      i(&RunConfig::ppo_epochs, "ppo.epochs"),
      d(&RunConfig::ppo_value_coef, "ppo.value_coef"),
      d(&RunConfig::ppo_bound_coef, "ppo.bound_coef"),
      d(&RunConfig::ppo_bound, "ppo.bound"),
      d(&RunConfig::ppo_kl_stop, "ppo.kl_stop"),
      d(&RunConfig::ppo_lr_final_frac, "ppo.lr_final_frac"),
      l(&RunConfig::policy_trunk, "policy.trunk_hidden"),
      l(&RunConfig::policy_task, "policy.task_hidden"),
      d(&RunConfig::curriculum_threshold1, "curriculum.threshold1"),
      d(&RunConfig::curriculum_threshold2, "curriculum.threshold2"),
      i(&RunConfig::eval_episodes, "eval.episodes"),
      i(&RunConfig::eval_level, "eval.level"),
      i(&RunConfig::eval_guide_steps, "eval.guide_steps"),
      d(&RunConfig::eval_guide_rate, "eval.guide_rate"),
  };
  return defs;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline std::string emit_config(const RunConfig& c) {
  std::ostringstream os;
  std::string section;
  for (const auto& def : detail::key_defs()) {
    std::string key = def.key;
    std::string sec = key.substr(0, key.find('.'));
    if (sec != section) {
      if (!section.empty()) os << '\n';
      section = sec;
    }
    os << key << " = " << def.get(c) << '\n';
  }
  return os.str();
}

inline void apply_key(RunConfig& c, const std::string& key,
                      const std::string& value) {
  for (const auto& def : detail::key_defs()) {
    if (key == def.key) {
      def.set(c, value);
      return;
    }
  }
  throw ConfigError("unknown config key: " + key);
}

// Lines of `section.key = value`; `#` starts a comment. Defaults come from
// the profile named in the text (or `desk`); later keys override.
inline RunConfig parse_config(const std::string& text) {
  // first pass: pick the profile so its defaults underlie everything else
  std::string profile = "desk";
  auto each_entry = [&text](auto&& fn) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": expected 'key = value'");
      std::string key = detail::trim(line.substr(0, eq));
      std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty() || value.empty())
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": empty key or value");
      fn(key, value);
    }
  };
  each_entry([&](const std::string& key, const std::string& value) {
    if (key == "run.profile") profile = value;
  });
  RunConfig c = make_profile(profile);
  each_entry([&](const std::string& key, const std::string& value) {
    apply_key(c, key, value);
  });
  return c;
}

// ---------------------------------------------------------------------------
// Projections into the module configs.

inline data::ReprVariant repr(const RunConfig& c) {
  return data::repr_from_string(c.repr);
}

inline data::GenerationConfig generation_config(const RunConfig& c) {
  data::GenerationConfig g;
  g.sim.noise_enabled = c.sim_noise;
  return g;
}

inline latent::CodecConfig codec_config(const RunConfig& c) {
  latent::CodecConfig k;
  k.hidden = c.codec_hidden;
  return k;
}

inline prior::PriorConfig prior_config(const RunConfig& c) {
  prior::PriorConfig p;
  p.F = c.prior_chunk_frames;
  p.h = c.prior_history;
  p.hidden = c.prior_hidden;
  p.lr = c.prior_lr;
  p.batch = c.prior_batch;
  return p;
}

inline nav::NavTrainConfig nav_config(const RunConfig& c) {
  nav::NavTrainConfig n;
  n.ppo.lr = c.ppo_lr;
  n.ppo.gamma = c.ppo_gamma;
  n.ppo.gae_tau = c.ppo_gae_tau;
  n.ppo.clip_eps = c.ppo_clip_eps;
  n.ppo.horizon = c.ppo_horizon;
  n.ppo.minibatch_size = c.ppo_minibatch;
  n.ppo.mini_epochs = c.ppo_mini_epochs;
  n.ppo.n_envs = c.ppo_n_envs;
  n.ppo.b1 = c.ppo_value_coef;
  n.ppo.b2 = c.ppo_bound_coef;
  n.ppo.bound_threshold = c.ppo_bound;
  n.ppo.kl_stop = c.ppo_kl_stop;
  n.ppo.lr_final_frac = c.ppo_lr_final_frac;
  n.epochs = c.ppo_epochs;
  n.arch.trunk_hidden = c.policy_trunk;
  n.arch.task_hidden = c.policy_task;
  n.curriculum.thresholds = {c.curriculum_threshold1, c.curriculum_threshold2};
  return n;
}

inline metrics::EvalConfig eval_config(const RunConfig& c) {
  metrics::EvalConfig e;
  e.n_episodes = c.eval_episodes;
  e.level = c.eval_level;
  e.guide_steps = c.eval_guide_steps;
  e.guide_rate = c.eval_guide_rate;
  e.seed = c.seed;
  return e;
}

}  // namespace nap::cfg
