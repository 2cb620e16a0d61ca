#include "halop/halop_agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace halop {

using nlohmann::json;

namespace {

Ticks price_to_ticks(double price, double tick_size) {
  if (!(price > 0.0) || !(tick_size > 0.0)) throw std::invalid_argument("price and tick size must be positive");
  const double x = price / tick_size;
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-6 * std::max(1.0, std::abs(r))) throw std::invalid_argument("price is not on the tick grid");
  return static_cast<Ticks>(r);
}

std::string family_name(DiscreteFamily f) {
  switch (f) {
    case DiscreteFamily::Exact: return "exact";
    case DiscreteFamily::Sampled: return "sampled";
    case DiscreteFamily::GSoftmax: return "gsoftmax";
  }
  return "?";
}

}  // namespace

LocationGrid Stage1ActionSpace::grid(double unit) const {
  std::vector<double> pts(pct.size());
  for (std::size_t i = 0; i < pct.size(); ++i) pts[i] = pct[i] / unit;
  return LocationGrid(std::move(pts));
}

Stage1ActionSpace build_stage1_grid(double current_price, double tick_size, int half_width) {
  if (half_width < 1) throw std::invalid_argument("stage-1 half-width must be >= 1");
  const Ticks p = price_to_ticks(current_price, tick_size);
  Stage1ActionSpace s;
  s.current_price = current_price;
  s.tick_size = tick_size;
  s.hi = half_width;
  s.lo = -static_cast<std::int64_t>(half_width);
  if (p + s.lo < 1) {
    s.lo = 1 - p;
    s.truncated = true;
  }
  for (std::int64_t a = s.lo; a <= s.hi; ++a) {
    s.ticks.push_back(a);
    s.pct.push_back(pct_from_ticks(TickAction{a}, current_price, tick_size).value);
  }
  return s;
}

int default_half_width(double current_price, double tick_size, double pct_band, int floor, int cap) {
  if (!(current_price > 0.0) || !(tick_size > 0.0)) throw std::invalid_argument("price and tick size must be positive");
  const double n = std::floor(pct_band * current_price / tick_size + 1e-9);
  const double clamped = std::clamp(n, static_cast<double>(floor), static_cast<double>(cap));
  return static_cast<int>(clamped);
}

LocationGrid Stage2ActionSpace::grid() const {
  if (half_width < 1) throw std::invalid_argument("stage-2 grid needs K >= 1");
  std::vector<double> pts;
  for (int k = -half_width; k <= half_width; ++k) pts.push_back(static_cast<double>(k));
  return LocationGrid(std::move(pts));
}

DiscreteFamily stage1_family(ActMode mode) {
  return mode == ActMode::Train ? DiscreteFamily::Sampled : DiscreteFamily::Exact;
}

Stage1Result stage1_act(const Stage1ActionSpace& space, GaussianParams p, const Stage1Options& opts, ActMode mode,
                        Rng& rng) {
  if (space.size() < 2) throw std::invalid_argument("stage-1 grid needs at least two actions");
  const LocationGrid grid = space.grid(opts.unit);
  Stage1Result r;
  DiscreteDist dist;
  r.family = stage1_family(mode);
  if (mode == ActMode::Train) {
    r.sample_seed = rng.next_u64();
    Rng srng(r.sample_seed);
    const CellSamples cs = draw_cell_samples(grid.size(), opts.n_samples, srng);
    dist = disc_gaussian_sampled(grid, p, cs);
  } else {
    dist = disc_gaussian_exact(grid, p);
  }
  r.index = mode == ActMode::Greedy ? argmax(dist) : sample(dist, rng);
  r.log_prob = log_prob(dist, r.index);
  r.pct = space.pct[r.index];
  r.ticks = ticks_from_pct(PctAction{r.pct}, space.current_price, space.tick_size).value;
  return r;
}

Stage2Result stage2_act(const Stage2ActionSpace& space, GaussianParams p, ActMode mode, Rng& rng) {
  if (space.half_width < 0) throw std::invalid_argument("stage-2 half-width must be >= 0");
  Stage2Result r;
  if (space.half_width == 0) return r;
  const DiscreteDist dist = gsoftmax(space.grid(), p);
  r.index = mode == ActMode::Greedy ? argmax(dist) : sample(dist, rng);
  r.offset = space.offset(r.index);
  r.log_prob = log_prob(dist, r.index);
  return r;
}

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::Halop: return "halop";
    case AgentKind::Stage1Only: return "stage1-only";
    case AgentKind::PpoGaussian: return "ppo-gaussian";
  }
  return "?";
}

AgentKind agent_kind_from_string(const std::string& s) {
  if (s == "halop") return AgentKind::Halop;
  if (s == "stage1-only") return AgentKind::Stage1Only;
  if (s == "ppo-gaussian") return AgentKind::PpoGaussian;
  throw std::invalid_argument("unknown agent kind '" + s + "'");
}

double joint_log_prob(const HalopDecision& d) { return d.s1.log_prob + d.s2.log_prob; }

NetworkConfig AgentConfig::network() const {
  NetworkConfig n;
  n.encoder = encoder;
  n.encoder.features = state.features();
  n.encoder.window = state.window;
  n.head = head;
  n.head.private_width = 3;
  n.two_stage = kind == AgentKind::Halop;
  n.stage1_private = kind != AgentKind::Halop;
  return n;
}

void AgentConfig::validate() const {
  state.validate();
  network().validate();
  if (stage2_half_width < 0) throw std::invalid_argument("stage-2 half-width must be >= 0");
  if (!(stage1.unit > 0.0)) throw std::invalid_argument("stage-1 unit must be positive");
  if (stage1.n_samples < 1) throw std::invalid_argument("stage-1 sample count must be >= 1");
  if (half_width_floor < 1 || half_width_cap < half_width_floor) throw std::invalid_argument("bad half-width bounds");
  if (!(value_scale > 0.0)) throw std::invalid_argument("value scale must be positive");
}

json to_json(const AgentConfig& c) {
  json net = to_json(c.network());
  return json{{"kind", to_string(c.kind)},
              {"window", c.state.window},
              {"levels", c.state.levels},
              {"encoder", net.at("encoder")},
              {"head", net.at("head")},
              {"stage2_half_width", c.stage2_half_width},
              {"stage1_unit", c.stage1.unit},
              {"stage1_samples", c.stage1.n_samples},
              {"half_width_pct", c.half_width_pct},
              {"half_width_floor", c.half_width_floor},
              {"half_width_cap", c.half_width_cap},
              {"value_scale", c.value_scale}};
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* n) { return k == n; }) == known.end()) {
      throw std::invalid_argument("unknown " + where + " key '" + k + "'");
    }
  }
}

}  // namespace

AgentConfig agent_config_from_json(const json& j) {
  check_keys(j,
             {"kind", "window", "levels", "encoder", "head", "stage2_half_width", "stage1_unit", "stage1_samples",
              "half_width_pct", "half_width_floor", "half_width_cap", "value_scale"},
             "agent");
  if (j.contains("encoder")) {
    check_keys(j.at("encoder"), {"features", "window", "blocks", "channels", "kernel", "stride", "heads", "pooled"},
               "encoder");
  }
  if (j.contains("head")) {
    check_keys(j.at("head"), {"hidden", "private_width", "sigma_min", "init_scale", "mean_gain"}, "head");
  }
  AgentConfig c;
  if (j.contains("kind")) c.kind = agent_kind_from_string(j.at("kind").get<std::string>());
  c.state.window = j.value("window", c.state.window);
  c.state.levels = j.value("levels", c.state.levels);
  const NetworkConfig n = network_config_from_json(j);
  c.encoder = n.encoder;
  c.head = n.head;
  c.stage2_half_width = j.value("stage2_half_width", c.stage2_half_width);
  c.stage1.unit = j.value("stage1_unit", c.stage1.unit);
  c.stage1.n_samples = j.value("stage1_samples", c.stage1.n_samples);
  c.half_width_pct = j.value("half_width_pct", c.half_width_pct);
  c.half_width_floor = j.value("half_width_floor", c.half_width_floor);
  c.half_width_cap = j.value("half_width_cap", c.half_width_cap);
  c.value_scale = j.value("value_scale", c.value_scale);
  c.validate();
  return c;
}

StepInput make_step_input(const Observation& obs, const EpisodeSpec& spec) {
  StepInput in;
  in.pub_standardized = obs.pub.standardized;
  in.pub_raw_log = obs.pub.raw_log;
  in.priv = {obs.state.remaining_inventory, obs.state.deficit, obs.state.remaining_time()};
  in.current_ticks = obs.current_price;
  in.tick_size = spec.tick_size;
  in.current_price = static_cast<double>(obs.current_price) * spec.tick_size;
  return in;
}

Agent::Agent(AgentConfig cfg, std::uint64_t seed) : cfg_(cfg), net_((cfg.validate(), cfg.network()), seed) {}

Agent::Agent(AgentConfig cfg, PolicyNetwork net) : cfg_(cfg), net_(std::move(net)) {
  cfg_.validate();
  const NetworkConfig want = cfg_.network();
  const NetworkConfig& have = net_.config();
  if (to_json(want) != to_json(have)) throw std::invalid_argument("network does not match the agent config");
}

Stage1ActionSpace Agent::action_space(const StepInput& in) const {
  const int M = default_half_width(in.current_price, in.tick_size, cfg_.half_width_pct, cfg_.half_width_floor,
                                   cfg_.half_width_cap);
  return build_stage1_grid(in.current_price, in.tick_size, M);
}

namespace {

// Forward pass shared by acting and re-evaluation.
struct Heads {
  PolicyNetwork::GaussianVars g1;
  PolicyNetwork::GaussianVars g2;
  ad::Var value;
  bool has_stage2 = false;
};

Heads forward(ad::Tape& tape, PolicyNetwork& net, const AgentConfig& cfg, const StepInput& in) {
  Heads h;
  const std::span<const double> priv(in.priv.data(), in.priv.size());
  if (cfg.kind == AgentKind::Halop) {
    ad::Var rep1 = net.encode(tape, in.pub_standardized);
    h.g1 = net.actor(tape, 1, rep1);
    ad::Var rep2 = net.encode(tape, in.pub_raw_log);
    h.g2 = net.actor(tape, 2, rep2, priv);
    h.value = net.critic(tape, 2, rep2, priv);
    h.has_stage2 = true;
  } else {
    ad::Var rep = net.encode(tape, in.pub_standardized);
    h.g1 = net.actor(tape, 1, rep, priv);
    h.value = net.critic(tape, 1, rep, priv);
  }
  return h;
}

GaussianParams params_of(const ad::Tape& tape, const PolicyNetwork::GaussianVars& g) {
  return {tape.scalar(g.mean), tape.scalar(g.scale)};
}

void finish_decision(HalopDecision& d, const Stage1ActionSpace& space, const StepInput& in) {
  d.final_ticks = d.s1.ticks + d.s2.offset;
  d.limit_price = in.current_ticks + d.final_ticks;
  d.clamped = false;
  if (d.limit_price < 1) {
    d.limit_price = 1;
    d.clamped = true;
  }
  d.grid_lo = space.lo;
  d.grid_hi = space.hi;
}

class AgentEvaluation final : public PolicyEvaluation {
public:
  AgentEvaluation(PolicyNetwork& net, const AgentConfig& cfg, const Stage1ActionSpace& space, const StepInput& in,
                  const HalopDecision& d) {
    heads_ = forward(tape_, net, cfg, in);
    const GaussianParams p1 = params_of(tape_, heads_.g1);
    if (cfg.kind == AgentKind::PpoGaussian) {
      log_prob = gaussian_log_prob(d.continuous_action, p1);
      entropy = gaussian_entropy(p1);
      g1_lp_ = gaussian_grad_log_prob(d.continuous_action, p1);
      g1_h_ = gaussian_grad_entropy(p1);
    } else {
      const LocationGrid grid = space.grid(cfg.stage1.unit);
      CellSamples cs;
      if (d.s1.family == DiscreteFamily::Sampled) {
        Rng srng(d.s1.sample_seed);
        cs = draw_cell_samples(grid.size(), cfg.stage1.n_samples, srng);
      }
      const DiscreteEval e = evaluate(d.s1.family, grid, p1, &cs);
      log_prob = log_prob_of(e.dist, d.s1.index);
      entropy = halop::entropy(e.dist);
      g1_lp_ = e.grad_log_prob(d.s1.index);
      g1_h_ = e.grad_entropy();
    }
    if (heads_.has_stage2 && cfg.stage2_half_width > 0) {
      const GaussianParams p2 = params_of(tape_, heads_.g2);
      const DiscreteEval e = evaluate(DiscreteFamily::GSoftmax, Stage2ActionSpace{cfg.stage2_half_width}.grid(), p2);
      log_prob += log_prob_of(e.dist, d.s2.index);
      entropy += halop::entropy(e.dist);
      g2_lp_ = e.grad_log_prob(d.s2.index);
      g2_h_ = e.grad_entropy();
      stage2_ = true;
    }
    value = tape_.scalar(heads_.value);
  }

  void backward(double d_log_prob, double d_entropy, double d_value) override {
    tape_.seed(heads_.g1.mean, d_log_prob * g1_lp_.d_mean + d_entropy * g1_h_.d_mean);
    tape_.seed(heads_.g1.scale, d_log_prob * g1_lp_.d_scale + d_entropy * g1_h_.d_scale);
    if (stage2_) {
      tape_.seed(heads_.g2.mean, d_log_prob * g2_lp_.d_mean + d_entropy * g2_h_.d_mean);
      tape_.seed(heads_.g2.scale, d_log_prob * g2_lp_.d_scale + d_entropy * g2_h_.d_scale);
    }
    tape_.seed(heads_.value, d_value);
    tape_.backward();
  }

private:
  static double log_prob_of(const DiscreteDist& dist, std::size_t i) {
    if (i >= dist.size()) throw std::invalid_argument("stored action index outside the grid");
    return halop::log_prob(dist, i);
  }

  ad::Tape tape_;
  Heads heads_;
  ParamGrad g1_lp_, g1_h_, g2_lp_, g2_h_;
  bool stage2_ = false;
};

}  // namespace

HalopDecision Agent::act(const StepInput& in, ActMode mode, Rng& rng) {
  const Stage1ActionSpace space = action_space(in);
  ad::Tape tape;
  const Heads h = forward(tape, net_, cfg_, in);
  HalopDecision d;
  d.kind = cfg_.kind;
  d.stage1 = params_of(tape, h.g1);
  d.value = tape.scalar(h.value) * cfg_.value_scale;
  if (cfg_.kind == AgentKind::PpoGaussian) {
    const double x = mode == ActMode::Greedy ? d.stage1.mean : d.stage1.mean + d.stage1.scale * rng.normal();
    d.continuous_action = x;
    d.s1.family = DiscreteFamily::Exact;
    d.s1.log_prob = gaussian_log_prob(x, d.stage1);
    const std::int64_t raw = ticks_from_pct(PctAction{x * cfg_.stage1.unit}, in.current_price, in.tick_size).value;
    d.s1.ticks = std::clamp(raw, space.lo, space.hi);
    d.s1.index = static_cast<std::size_t>(d.s1.ticks - space.lo);
    d.s1.pct = space.pct[d.s1.index];
  } else {
    d.s1 = stage1_act(space, d.stage1, cfg_.stage1, mode, rng);
    if (h.has_stage2) {
      d.stage2 = params_of(tape, h.g2);
      d.s2 = stage2_act(Stage2ActionSpace{cfg_.stage2_half_width}, d.stage2, mode, rng);
    }
  }
  finish_decision(d, space, in);
  return d;
}

std::unique_ptr<PolicyEvaluation> Agent::evaluate(const StepInput& in, const HalopDecision& d) {
  const Stage1ActionSpace space = action_space(in);
  if (space.lo != d.grid_lo || space.hi != d.grid_hi) throw std::invalid_argument("decision grid differs from state");
  return std::make_unique<AgentEvaluation>(net_, cfg_, space, in, d);
}

json Agent::checkpoint_extra() const { return json{{"agent", to_json(cfg_)}}; }

std::string agent_checkpoint_text(const Agent& agent) {
  return checkpoint_text(agent.network(), agent.checkpoint_extra());
}

void save_agent(const std::filesystem::path& path, const Agent& agent) {
  save_checkpoint(path, agent.network(), agent.checkpoint_extra());
}

Agent load_agent(const std::filesystem::path& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  if (!ck.extra.contains("agent")) throw std::runtime_error("checkpoint has no agent config: " + path.string());
  return Agent(agent_config_from_json(ck.extra.at("agent")), std::move(ck.net));
}

std::uint64_t state_digest(std::span<const double> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

json decision_to_json(const HalopDecision& d, const StepInput& in) {
  std::vector<double> all(in.pub_standardized);
  all.insert(all.end(), in.pub_raw_log.begin(), in.pub_raw_log.end());
  all.insert(all.end(), in.priv.begin(), in.priv.end());
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(state_digest(all)));
  json j{{"agent", to_string(d.kind)},
         {"state_digest", digest},
         {"current_price", in.current_ticks},
         {"stage1",
          {{"mean", d.stage1.mean},
           {"scale", d.stage1.scale},
           {"family", family_name(d.s1.family)},
           {"index", d.s1.index},
           {"ticks", d.s1.ticks},
           {"pct", d.s1.pct},
           {"log_prob", d.s1.log_prob}}},
         {"final_ticks", d.final_ticks},
         {"limit_price", d.limit_price},
         {"clamped", d.clamped},
         {"log_prob", joint_log_prob(d)},
         {"value", d.value}};
  if (d.kind == AgentKind::Halop) {
    j["stage2"] = {{"mean", d.stage2.mean},
                   {"scale", d.stage2.scale},
                   {"index", d.s2.index},
                   {"offset", d.s2.offset},
                   {"log_prob", d.s2.log_prob}};
  }
  if (d.kind == AgentKind::PpoGaussian) j["stage1"]["action"] = d.continuous_action;
  return j;
}

}  // namespace halop
