#include "fruitlet/assoc/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fruitlet/tensor/ops.hpp"

namespace fruitlet::assoc {

namespace t = fruitlet::tensor;

void NetConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("NetConfig: " + what); };
  if (feature_dim == 0 || heads == 0 || feature_dim % heads != 0) {
    fail("feature_dim must be a positive multiple of heads");
  }
  if (layers < 1) fail("layers must be >= 1");
  if (sinkhorn_iters < 1) fail("sinkhorn_iters must be >= 1");
  if (!(match_threshold >= 0.0 && match_threshold <= 1.0)) fail("match_threshold outside [0, 1]");
  if (visual_channels == 0 || visual_size == 0 || positional_size == 0) fail("empty input grids");
  for (auto c : visual_conv)
    if (c == 0) fail("zero conv width");
  for (auto c : positional_conv)
    if (c == 0) fail("zero conv width");
}

void to_json(nlohmann::json& j, const NetConfig& c) {
  j = {{"feature_dim", c.feature_dim},         {"layers", c.layers},
       {"heads", c.heads},                     {"sinkhorn_iters", c.sinkhorn_iters},
       {"match_threshold", c.match_threshold}, {"visual_channels", c.visual_channels},
       {"visual_size", c.visual_size},         {"positional_size", c.positional_size},
       {"visual_conv", c.visual_conv},         {"positional_conv", c.positional_conv}};
}

void from_json(const nlohmann::json& j, NetConfig& c) {
  const NetConfig d;
  c.feature_dim = j.value("feature_dim", d.feature_dim);
  c.layers = j.value("layers", d.layers);
  c.heads = j.value("heads", d.heads);
  c.sinkhorn_iters = j.value("sinkhorn_iters", d.sinkhorn_iters);
  c.match_threshold = j.value("match_threshold", d.match_threshold);
  c.visual_channels = j.value("visual_channels", d.visual_channels);
  c.visual_size = j.value("visual_size", d.visual_size);
  c.positional_size = j.value("positional_size", d.positional_size);
  c.visual_conv = j.value("visual_conv", d.visual_conv);
  c.positional_conv = j.value("positional_conv", d.positional_conv);
}

std::vector<double> AssignmentMatrix::p() const {
  std::vector<double> out;
  out.reserve((rows - 1) * (cols - 1));
  for (std::size_t i = 0; i + 1 < rows; ++i)
    for (std::size_t j = 0; j + 1 < cols; ++j) out.push_back(at(i, j));
  return out;
}

Tensor log_sinkhorn(const Tensor& sbar, std::size_t iters) {
  if (sbar.rank() != 2 || sbar.dim(0) < 2 || sbar.dim(1) < 2) {
    throw t::ShapeError("sinkhorn", "expected (M+1)x(N+1) with M, N >= 1, got " + t::shape_str(sbar.shape()));
  }
  if (iters < 1) throw std::invalid_argument("sinkhorn: iterations must be >= 1");
  if (!sbar.all_finite()) throw t::NonFiniteError("sinkhorn: non-finite score matrix");
  const std::size_t m = sbar.dim(0) - 1, n = sbar.dim(1) - 1;
  const double norm = -std::log(static_cast<double>(m + n));
  std::vector<double> mu(m + 1, norm), nu(n + 1, norm);
  mu[m] = std::log(static_cast<double>(n)) + norm;
  nu[n] = std::log(static_cast<double>(m)) + norm;
  const Tensor log_mu({m + 1, 1}, std::move(mu));
  const Tensor log_nu({1, n + 1}, std::move(nu));

  Tensor u = Tensor::zeros({m + 1, 1});
  Tensor v = Tensor::zeros({1, n + 1});
  for (std::size_t it = 0; it < iters; ++it) {
    u = t::sub(log_mu, t::logsumexp(t::add(sbar, v), 1));
    v = t::sub(log_nu, t::logsumexp(t::add(sbar, u), 0));
  }
  return t::add_scalar(t::add(t::add(sbar, u), v), -norm);
}

Tensor sinkhorn(const Tensor& sbar, std::size_t iters) { return t::exp(log_sinkhorn(sbar, iters)); }

MatchSet extract_matches(const std::vector<double>& p, std::size_t m, std::size_t n,
                         double threshold, const std::vector<bool>& clustered_a,
                         const std::vector<bool>& clustered_b) {
  if (p.size() != m * n || clustered_a.size() != m || clustered_b.size() != n) {
    throw std::invalid_argument("extract_matches: size mismatch");
  }
  std::vector<std::size_t> row_best(m, 0), col_best(n, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 1; j < n; ++j)
      if (p[i * n + j] > p[i * n + row_best[i]]) row_best[i] = j;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 1; i < m; ++i)
      if (p[i * n + j] > p[col_best[j] * n + j]) col_best[j] = i;

  MatchSet out;
  std::vector<bool> used_b(n, false);
  for (std::size_t i = 0; i < m; ++i) {
    if (!clustered_a[i] || n == 0) continue;
    const std::size_t j = row_best[i];
    const double pij = p[i * n + j];
    if (clustered_b[j] && col_best[j] == i && pij > threshold) {
      out.matches.push_back({i, j, pij});
      used_b[j] = true;
    } else {
      out.unmatched_a.push_back(i);
    }
  }
  for (std::size_t j = 0; j < n; ++j)
    if (clustered_b[j] && !used_b[j]) out.unmatched_b.push_back(j);
  return out;
}

Tensor assoc_loss(const Tensor& log_pbar, const MatchLabels& labels) {
  if (log_pbar.rank() != 2) throw t::ShapeError("assoc_loss", "expected rank 2 log P̄");
  const std::size_t rows = log_pbar.dim(0), cols = log_pbar.dim(1);
  const std::size_t m = rows - 1, n = cols - 1;
  std::vector<std::size_t> idx;
  auto check = [](std::size_t v, std::size_t bound, const char* what) {
    if (v >= bound) {
      throw std::out_of_range(std::string("assoc_loss: ") + what + " index " + std::to_string(v) +
                              " out of range " + std::to_string(bound));
    }
  };
  for (auto [i, j] : labels.matches) {
    check(i, m, "matched A");
    check(j, n, "matched B");
    idx.push_back(i * cols + j);
  }
  for (auto i : labels.unmatched_a) {
    check(i, m, "unmatched A");
    idx.push_back(i * cols + n);
  }
  for (auto j : labels.unmatched_b) {
    check(j, n, "unmatched B");
    idx.push_back(m * cols + j);
  }
  if (idx.empty()) return Tensor::scalar(0.0);
  return t::neg(t::sum(t::pick(log_pbar, idx)));
}

Tensor score_and_augment(const Tensor& fa, const Tensor& fb, const Tensor& z) {
  if (fa.rank() != 2 || fb.rank() != 2 || fa.dim(1) != fb.dim(1)) {
    throw t::ShapeError("score_and_augment",
                        "descriptor mismatch " + t::shape_str(fa.shape()) + " vs " + t::shape_str(fb.shape()));
  }
  if (z.numel() != 1) throw t::ShapeError("score_and_augment", "dustbin must be a single value");
  const Tensor z11 = z.rank() == 2 ? z : t::reshape(z, {1, 1});
  const std::size_t m = fa.dim(0), n = fb.dim(0);
  const Tensor s = t::matmul(fa, t::transpose(fb));
  const Tensor col = t::mul(Tensor::ones({m, 1}), z11);
  const Tensor row = t::mul(Tensor::ones({1, n + 1}), z11);
  return t::concat({t::concat({s, col}, 1), row}, 0);
}

AssocNet::AssocNet(NetConfig config, std::uint64_t seed) : config_(std::move(config)), params_(seed) {
  config_.validate();
  register_parameters();
}

AssocNet::AssocNet(NetConfig config, tensor::ParameterStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  AssocNet reference(config_, params_.seed());
  const auto& want = reference.params().parameters();
  const auto& have = params_.parameters();
  if (want.size() != have.size()) {
    throw std::invalid_argument("AssocNet: checkpoint has " + std::to_string(have.size()) +
                                " parameters, config needs " + std::to_string(want.size()));
  }
  for (const auto& [name, tensor] : want) {
    auto it = have.find(name);
    if (it == have.end()) throw std::invalid_argument("AssocNet: checkpoint lacks parameter " + name);
    if (it->second.shape() != tensor.shape()) {
      throw std::invalid_argument("AssocNet: parameter " + name + " has shape " +
                                  t::shape_str(it->second.shape()) + ", config needs " +
                                  t::shape_str(tensor.shape()));
    }
  }
}

void AssocNet::register_parameters() {
  auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    params_.add_xavier(prefix + ".weight", {in, out}, in, out);
    params_.add_zeros(prefix + ".bias", {1, out});
  };
  auto conv = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    params_.add_xavier(prefix + ".weight", {out, in, 3, 3}, in * 9, out * 9);
    params_.add_zeros(prefix + ".bias", {out});
  };
  const std::size_t d = config_.feature_dim, nd = config_.node_dim();

  std::size_t ch = config_.visual_channels;
  for (std::size_t k = 0; k < config_.visual_conv.size(); ++k) {
    conv("venc.conv" + std::to_string(k), ch, config_.visual_conv[k]);
    ch = config_.visual_conv[k];
  }
  linear("venc.fc", ch * config_.visual_size * config_.visual_size, d);

  ch = 4;
  std::size_t side = config_.positional_size;
  for (std::size_t k = 0; k < config_.positional_conv.size(); ++k) {
    conv("penc.conv" + std::to_string(k), ch, config_.positional_conv[k]);
    ch = config_.positional_conv[k];
    side = (side + 1) / 2;
  }
  linear("penc.fc", ch * side * side, d);

  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "gnn." + std::to_string(l);
    linear(p + ".q", nd, d);
    linear(p + ".k", nd, d);
    linear(p + ".v", nd, d);
    linear(p + ".merge", d, nd);
    linear(p + ".mlp0", 2 * nd, 2 * nd);
    // starts as the identity layer
    params_.add_zeros(p + ".mlp1.weight", {2 * nd, nd});
    params_.add_zeros(p + ".mlp1.bias", {1, nd});
  }
  linear("proj", nd, nd);
  params_.add_constant("dustbin", {1, 1}, 1.0);
}

Tensor AssocNet::linear(const Tensor& x, const std::string& prefix) const {
  return t::add(t::matmul(x, params_.get(prefix + ".weight")), params_.get(prefix + ".bias"));
}

Tensor AssocNet::encode_batch(const std::vector<const DetectionNode*>& nodes) const {
  const std::size_t count = nodes.size();
  const std::size_t vis_len = config_.visual_channels * config_.visual_size * config_.visual_size;
  const std::size_t pos_len = 4 * config_.positional_size * config_.positional_size;
  std::vector<double> vis, pos, st;
  vis.reserve(count * vis_len);
  pos.reserve(count * pos_len);
  for (const auto* node : nodes) {
    if (node->visual.size() != vis_len || node->positional.size() != pos_len) {
      throw t::ShapeError("encode_node", "node " + node->id + " grids have " +
                                             std::to_string(node->visual.size()) + "/" +
                                             std::to_string(node->positional.size()) +
                                             " values, expected " + std::to_string(vis_len) + "/" +
                                             std::to_string(pos_len));
    }
    vis.insert(vis.end(), node->visual.begin(), node->visual.end());
    pos.insert(pos.end(), node->positional.begin(), node->positional.end());
    st.push_back(node->cluster_score);
    st.push_back(node->is_tag ? 1.0 : 0.0);
  }

  Tensor hv({count, config_.visual_channels, config_.visual_size, config_.visual_size}, std::move(vis));
  for (std::size_t k = 0; k < config_.visual_conv.size(); ++k) {
    const std::string p = "venc.conv" + std::to_string(k);
    hv = t::relu(t::conv2d(hv, params_.get(p + ".weight"), params_.get(p + ".bias"), {1, 1}));
  }
  hv = linear(t::reshape(hv, {count, hv.numel() / count}), "venc.fc");

  Tensor hp({count, 4, config_.positional_size, config_.positional_size}, std::move(pos));
  for (std::size_t k = 0; k < config_.positional_conv.size(); ++k) {
    const std::string p = "penc.conv" + std::to_string(k);
    hp = t::relu(t::conv2d(hp, params_.get(p + ".weight"), params_.get(p + ".bias"), {2, 1}));
  }
  hp = linear(t::reshape(hp, {count, hp.numel() / count}), "penc.fc");

  return t::concat({t::add(hv, hp), Tensor({count, 2}, std::move(st))}, 1);
}

Tensor AssocNet::encode_nodes(const ClusterObservation& obs) const {
  std::vector<const DetectionNode*> nodes;
  for (const auto& n : obs.nodes) nodes.push_back(&n);
  if (nodes.empty()) throw t::ShapeError("encode_node", "observation has no nodes");
  return encode_batch(nodes);
}

Tensor AssocNet::encode_node(const DetectionNode& node) const { return encode_batch({&node}); }

Tensor AssocNet::attention(const Tensor& x, const Tensor& source, std::size_t layer) const {
  const std::string p = "gnn." + std::to_string(layer);
  const Tensor q = linear(x, p + ".q");
  const Tensor k = linear(source, p + ".k");
  const Tensor v = linear(source, p + ".v");
  const std::size_t dh = config_.feature_dim / config_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const Tensor qh = t::slice(q, 1, h * dh, dh);
    const Tensor kh = t::slice(k, 1, h * dh, dh);
    const Tensor vh = t::slice(v, 1, h * dh, dh);
    const Tensor alpha = t::softmax_rows(t::scale(t::matmul(qh, t::transpose(kh)), inv_sqrt));
    heads.push_back(t::matmul(alpha, vh));
  }
  return linear(heads.size() == 1 ? heads.front() : t::concat(heads, 1), p + ".merge");
}

std::pair<Tensor, Tensor> AssocNet::gnn_layer(const Tensor& xa, const Tensor& xb, std::size_t layer) const {
  if (layer >= config_.layers) throw std::out_of_range("gnn_layer: layer index out of range");
  const std::size_t nd = config_.node_dim();
  if (xa.rank() != 2 || xb.rank() != 2 || xa.dim(1) != nd || xb.dim(1) != nd) {
    throw t::ShapeError("gnn_layer", "node features " + t::shape_str(xa.shape()) + ", " +
                                         t::shape_str(xb.shape()) + " need width " + std::to_string(nd));
  }
  const bool cross = layer % 2 == 1;
  const Tensor ma = attention(xa, cross ? xb : xa, layer);
  const Tensor mb = attention(xb, cross ? xa : xb, layer);
  const std::string p = "gnn." + std::to_string(layer);
  auto update = [&](const Tensor& x, const Tensor& msg) {
    const Tensor hidden = t::relu(linear(t::concat({x, msg}, 1), p + ".mlp0"));
    return t::add(x, linear(hidden, p + ".mlp1"));
  };
  return {update(xa, ma), update(xb, mb)};
}

Tensor AssocNet::final_projection(const Tensor& x) const { return linear(x, "proj"); }

Tensor AssocNet::forward(const ClusterObservation& a, const ClusterObservation& b) const {
  Tensor xa = encode_nodes(a);
  Tensor xb = encode_nodes(b);
  for (std::size_t l = 0; l < config_.layers; ++l) std::tie(xa, xb) = gnn_layer(xa, xb, l);
  const double c = 1.0 / std::sqrt(std::sqrt(static_cast<double>(config_.node_dim())));
  const Tensor sbar = score_and_augment(t::scale(final_projection(xa), c), t::scale(final_projection(xb), c),
                                        params_.get("dustbin"));
  return log_sinkhorn(sbar, config_.sinkhorn_iters);
}

AssignmentMatrix AssocNet::infer(const ClusterObservation& a, const ClusterObservation& b,
                                 double threshold) const {
  t::NoGradGuard guard;
  const Tensor log_pbar = forward(a, b);
  AssignmentMatrix out;
  out.rows = log_pbar.dim(0);
  out.cols = log_pbar.dim(1);
  out.pbar.reserve(log_pbar.numel());
  for (double v : log_pbar.data()) out.pbar.push_back(std::exp(v));
  std::vector<bool> ca, cb;
  for (const auto& n : a.nodes) ca.push_back(n.is_cluster);
  for (const auto& n : b.nodes) cb.push_back(n.is_cluster);
  out.matches = extract_matches(out.p(), out.rows - 1, out.cols - 1, threshold, ca, cb);
  return out;
}

}  // namespace fruitlet::assoc
