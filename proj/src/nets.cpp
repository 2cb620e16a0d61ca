#include "halop/nets.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "halop/rng.hpp"

namespace halop {

using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

std::vector<double> fan_in_init(int rows, int cols, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(rows * cols));
  const double sd = 1.0 / std::sqrt(static_cast<double>(rows));
  for (auto& x : w) x = sd * rng.normal();
  return w;
}

// Gaussian matrix with orthonormalized columns (or rows, whichever is the
// shorter side), times `gain`.
std::vector<double> orthogonal_init(int rows, int cols, double gain, Rng& rng) {
  const bool tall = rows >= cols;
  const int n = tall ? rows : cols;  // vector length
  const int k = tall ? cols : rows;  // number of vectors
  std::vector<std::vector<double>> vecs(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(n)));
  for (int i = 0; i < k; ++i) {
    auto& v = vecs[static_cast<std::size_t>(i)];
    for (auto& x : v) x = rng.normal();
    for (int j = 0; j < i; ++j) {
      const auto& u = vecs[static_cast<std::size_t>(j)];
      double dot = 0.0;
      for (int q = 0; q < n; ++q) dot += v[q] * u[q];
      for (int q = 0; q < n; ++q) v[q] -= dot * u[q];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
  }
  std::vector<double> w(static_cast<std::size_t>(rows * cols));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      w[static_cast<std::size_t>(r * cols + c)] =
          gain * (tall ? vecs[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)]
                       : vecs[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
    }
  return w;
}

std::string block_name(int b, const char* part) { return "enc.b" + std::to_string(b) + "." + part; }

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

int EncoderConfig::total_stride() const {
  int s = 1;
  for (int b = 0; b < blocks; ++b) s *= stride;
  return s;
}

void EncoderConfig::validate() const {
  require(features > 0 && window > 0 && blocks > 0 && channels > 0 && kernel > 0 && stride > 0 && heads > 0 &&
              pooled > 0,
          "encoder config entries must be positive");
  require(window % total_stride() == 0, "window length must be divisible by the total convolution stride");
  require(channels % heads == 0, "channels must be divisible by attention heads");
}

void NetworkConfig::validate() const {
  encoder.validate();
  require(head.hidden > 0 && head.private_width > 0, "head widths must be positive");
  require(head.sigma_min > 0.0, "sigma floor must be positive");
  require(head.init_scale > head.sigma_min, "initial sigma must exceed the floor");
}

json to_json(const NetworkConfig& cfg) {
  const auto& e = cfg.encoder;
  const auto& h = cfg.head;
  return json{{"encoder",
               {{"features", e.features},
                {"window", e.window},
                {"blocks", e.blocks},
                {"channels", e.channels},
                {"kernel", e.kernel},
                {"stride", e.stride},
                {"heads", e.heads},
                {"pooled", e.pooled}}},
              {"head",
               {{"hidden", h.hidden},
                {"private_width", h.private_width},
                {"sigma_min", h.sigma_min},
                {"init_scale", h.init_scale},
                {"mean_gain", h.mean_gain}}},
              {"two_stage", cfg.two_stage},
              {"stage1_private", cfg.stage1_private}};
}

NetworkConfig network_config_from_json(const json& j) {
  NetworkConfig c;
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    c.encoder.features = e.value("features", c.encoder.features);
    c.encoder.window = e.value("window", c.encoder.window);
    c.encoder.blocks = e.value("blocks", c.encoder.blocks);
    c.encoder.channels = e.value("channels", c.encoder.channels);
    c.encoder.kernel = e.value("kernel", c.encoder.kernel);
    c.encoder.stride = e.value("stride", c.encoder.stride);
    c.encoder.heads = e.value("heads", c.encoder.heads);
    c.encoder.pooled = e.value("pooled", c.encoder.pooled);
  }
  if (j.contains("head")) {
    const auto& h = j.at("head");
    c.head.hidden = h.value("hidden", c.head.hidden);
    c.head.private_width = h.value("private_width", c.head.private_width);
    c.head.sigma_min = h.value("sigma_min", c.head.sigma_min);
    c.head.init_scale = h.value("init_scale", c.head.init_scale);
    c.head.mean_gain = h.value("mean_gain", c.head.mean_gain);
  }
  c.two_stage = j.value("two_stage", c.two_stage);
  c.stage1_private = j.value("stage1_private", c.stage1_private);
  return c;
}

PolicyNetwork::PolicyNetwork(NetworkConfig cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  build();
}

bool PolicyNetwork::uses_private(int stage) const { return stage == 2 || cfg_.stage1_private; }

void PolicyNetwork::build() {
  Rng rng(seed_);
  const auto& e = cfg_.encoder;
  const int C = e.channels;
  int in = e.features;
  auto zeros = [](int n) { return std::vector<double>(static_cast<std::size_t>(n), 0.0); };
  for (int b = 0; b < e.blocks; ++b) {
    params_.add(block_name(b, "conv.w"), e.kernel * in, C, fan_in_init(e.kernel * in, C, rng));
    params_.add(block_name(b, "conv.b"), 1, C, zeros(C));
    params_.add(block_name(b, "skip.w"), in, C, fan_in_init(in, C, rng));
    for (const char* m : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
      params_.add(block_name(b, m), C, C, fan_in_init(C, C, rng));
    }
    params_.add(block_name(b, "attn.o_b"), 1, C, zeros(C));
    in = C;
  }
  params_.add("enc.pool.score", 1, C, fan_in_init(C, 1, rng));
  params_.add("enc.proj.w", C, e.pooled, fan_in_init(C, e.pooled, rng));
  params_.add("enc.proj.b", 1, e.pooled, zeros(e.pooled));

  const int H = cfg_.head.hidden;
  auto add_head = [&](const std::string& name, int width, int out, bool actor) {
    params_.add(name + ".w1", width, H, orthogonal_init(width, H, 1.0, rng));
    params_.add(name + ".b1", 1, H, zeros(H));
    std::vector<double> w2 = orthogonal_init(H, out, 1.0, rng);
    std::vector<double> b2 = zeros(out);
    if (actor) {
      // Column 0 drives the mean, column 1 the pre-softplus scale; both start
      // small so the initial policy is close to N(0, init_scale).
      for (int r = 0; r < H; ++r) {
        w2[static_cast<std::size_t>(r * out)] *= cfg_.head.mean_gain;
        w2[static_cast<std::size_t>(r * out + 1)] *= cfg_.head.mean_gain;
      }
      const double target = cfg_.head.init_scale - cfg_.head.sigma_min;
      b2[1] = target > 30.0 ? target : std::log(std::expm1(target));
    }
    params_.add(name + ".w2", H, out, w2);
    params_.add(name + ".b2", 1, out, b2);
  };
  const int rep = e.pooled;
  const int priv = cfg_.head.private_width;
  const int w1 = rep + (cfg_.stage1_private ? priv : 0);
  add_head("actor1", w1, 2, true);
  if (cfg_.two_stage) {
    add_head("actor2", rep + priv, 2, true);
    add_head("critic2", rep + priv, 1, false);
  } else {
    add_head("critic1", w1, 1, false);
  }
}

ad::Var PolicyNetwork::encode(ad::Tape& tape, std::span<const double> window) {
  const auto& e = cfg_.encoder;
  require(window.size() == static_cast<std::size_t>(e.window * e.features), "encoder input shape mismatch");
  ad::Var x = tape.constant(e.window, e.features, window);
  const int C = e.channels;
  const int dh = C / e.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int b = 0; b < e.blocks; ++b) {
    ad::Var patches = tape.im2col(x, e.kernel, e.stride, e.kernel / 2);
    ad::Var conv = tape.matmul(patches, tape.parameter(params_, block_name(b, "conv.w")));
    conv = tape.tanh(tape.add_row(conv, tape.parameter(params_, block_name(b, "conv.b"))));
    ad::Var skip = tape.matmul(tape.im2col(x, 1, e.stride, 0), tape.parameter(params_, block_name(b, "skip.w")));
    require(tape.rows(conv) == tape.rows(skip), "conv and shortcut lengths differ; use an odd kernel");
    ad::Var z = tape.add(conv, skip);

    ad::Var q = tape.matmul(z, tape.parameter(params_, block_name(b, "attn.q")));
    ad::Var k = tape.matmul(z, tape.parameter(params_, block_name(b, "attn.k")));
    ad::Var v = tape.matmul(z, tape.parameter(params_, block_name(b, "attn.v")));
    std::vector<ad::Var> outs;
    for (int h = 0; h < e.heads; ++h) {
      ad::Var qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
      ad::Var kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
      ad::Var vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
      ad::Var att = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt));
      outs.push_back(tape.matmul(att, vh));
    }
    ad::Var o = tape.matmul(tape.concat_cols(outs), tape.parameter(params_, block_name(b, "attn.o")));
    o = tape.add_row(o, tape.parameter(params_, block_name(b, "attn.o_b")));
    x = tape.add(z, o);
  }
  // Attentive pooling: softmax over time of a learned score, then a weighted sum.
  ad::Var scores = tape.matmul_nt(tape.parameter(params_, "enc.pool.score"), x);  // 1 x L
  ad::Var alpha = tape.softmax_rows(scores);
  ad::Var pooled = tape.matmul(alpha, x);  // 1 x C
  ad::Var rep = tape.matmul(pooled, tape.parameter(params_, "enc.proj.w"));
  return tape.tanh(tape.add_row(rep, tape.parameter(params_, "enc.proj.b")));
}

ad::Var PolicyNetwork::head_input(ad::Tape& tape, int stage, ad::Var rep, std::span<const double> priv) {
  require(stage == 1 || stage == 2, "stage must be 1 or 2");
  require(tape.rows(rep) == 1 && tape.cols(rep) == cfg_.encoder.pooled, "representation width mismatch");
  if (!uses_private(stage)) {
    require(priv.empty(), "stage-1 heads do not take private state");
    return rep;
  }
  require(priv.size() == static_cast<std::size_t>(cfg_.head.private_width), "private state missing or wrong size");
  std::vector<ad::Var> parts{rep, tape.constant(1, cfg_.head.private_width, priv)};
  return tape.concat_cols(parts);
}

ad::Var PolicyNetwork::mlp(ad::Tape& tape, const std::string& name, ad::Var x) {
  require(has_head(name), "network has no head '" + name + "'");
  ad::Var h = tape.matmul(x, tape.parameter(params_, name + ".w1"));
  h = tape.tanh(tape.add_row(h, tape.parameter(params_, name + ".b1")));
  ad::Var out = tape.matmul(h, tape.parameter(params_, name + ".w2"));
  return tape.add_row(out, tape.parameter(params_, name + ".b2"));
}

PolicyNetwork::GaussianVars PolicyNetwork::actor(ad::Tape& tape, int stage, ad::Var rep,
                                                 std::span<const double> priv) {
  ad::Var out = mlp(tape, "actor" + std::to_string(stage), head_input(tape, stage, rep, priv));
  GaussianVars g;
  g.mean = tape.slice_cols(out, 0, 1);
  g.scale = tape.add_scalar(tape.softplus(tape.slice_cols(out, 1, 2)), cfg_.head.sigma_min);
  return g;
}

ad::Var PolicyNetwork::critic(ad::Tape& tape, int stage, ad::Var rep, std::span<const double> priv) {
  return mlp(tape, "critic" + std::to_string(stage), head_input(tape, stage, rep, priv));
}

std::vector<double> PolicyNetwork::encode(std::span<const double> window) {
  ad::Tape tape;
  auto v = tape.value(encode(tape, window));
  return {v.begin(), v.end()};
}

GaussianParams PolicyNetwork::actor_head(int stage, std::span<const double> rep, std::span<const double> priv) {
  ad::Tape tape;
  ad::Var r = tape.constant(1, static_cast<int>(rep.size()), rep);
  auto g = actor(tape, stage, r, priv);
  return {tape.scalar(g.mean), tape.scalar(g.scale)};
}

double PolicyNetwork::critic_head(int stage, std::span<const double> rep, std::span<const double> priv) {
  ad::Tape tape;
  ad::Var r = tape.constant(1, static_cast<int>(rep.size()), rep);
  return tape.scalar(critic(tape, stage, r, priv));
}

std::string checkpoint_text(const PolicyNetwork& net, const json& extra) {
  json params = json::object();
  for (const auto& s : net.params().slices()) {
    auto v = net.params().values(s.name);
    params[s.name] = {{"rows", s.rows}, {"cols", s.cols}, {"values", std::vector<double>(v.begin(), v.end())}};
  }
  json j{{"format", "halop-checkpoint"},
         {"version", kCheckpointVersion},
         {"seed", net.seed()},
         {"config", to_json(net.config())},
         {"params", params},
         {"extra", extra.is_null() ? json::object() : extra}};
  return j.dump(1);
}

void save_checkpoint(const std::filesystem::path& path, const PolicyNetwork& net, const json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_text(net, extra) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  json j = json::parse(in);
  if (j.value("format", "") != "halop-checkpoint") throw std::runtime_error("not a checkpoint: " + path.string());
  if (j.value("version", 0) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  PolicyNetwork net(network_config_from_json(j.at("config")), j.at("seed").get<std::uint64_t>());
  const auto& params = j.at("params");
  for (const auto& s : net.params().slices()) {
    if (!params.contains(s.name)) throw std::runtime_error("checkpoint lacks parameter '" + s.name + "'");
    const auto& p = params.at(s.name);
    if (p.at("rows").get<int>() != s.rows || p.at("cols").get<int>() != s.cols) {
      throw std::runtime_error("checkpoint shape mismatch for '" + s.name + "'");
    }
    const auto vals = p.at("values").get<std::vector<double>>();
    auto dst = net.params().values(s.name);
    std::copy(vals.begin(), vals.end(), dst.begin());
  }
  return {std::move(net), j.value("extra", json::object())};
}

}  // namespace halop
