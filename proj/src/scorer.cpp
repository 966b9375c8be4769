#include "propguard/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "propguard/error.hpp"
#include "propguard/rng.hpp"

namespace propguard::scorer {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// y = M x
std::vector<double> matvec(const Mat& m, const std::vector<double>& x) {
  std::vector<double> y(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < m.cols; ++c) s += m.at(r, c) * x[c];
    y[r] = s;
  }
  return y;
}

// M += g (x)^T
void add_outer(Mat& m, const std::vector<double>& g, const std::vector<double>& x) {
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) m.at(r, c) += g[r] * x[c];
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_shapes(const ScorerParameters& p, const graph::STGraph& g) {
  require(p.d_r == g.d_r, Errc::invalid_params, "scorer d_R does not match graph features");
  require(p.w_self.rows == p.h && p.w_self.cols == p.d_r, Errc::invalid_params,
          "w_self shape mismatch");
  require(p.w_temporal.rows == p.h && p.w_comm.rows == p.h, Errc::invalid_params,
          "edge transform shape mismatch");
  require(static_cast<int>(p.attn_temporal.size()) == 2 * p.h &&
              static_cast<int>(p.attn_comm.size()) == 2 * p.h,
          Errc::invalid_params, "attention vector shape mismatch");
  require(static_cast<int>(p.w_out.size()) == p.h, Errc::invalid_params, "w_out shape mismatch");
}

}  // namespace

ScorerParameters ScorerParameters::zeros(int d_r, int h) {
  ScorerParameters p;
  p.d_r = d_r;
  p.h = h;
  p.w_self = Mat(h, d_r);
  p.w_temporal = Mat(h, d_r);
  p.w_comm = Mat(h, d_r);
  p.attn_temporal.assign(2 * h, 0.0);
  p.attn_comm.assign(2 * h, 0.0);
  p.w_out.assign(h, 0.0);
  p.b_out = 0.0;
  return p;
}

ScorerParameters ScorerParameters::random_init(int d_r, int h, uint64_t seed, double scale) {
  ScorerParameters p = zeros(d_r, h);
  Rng rng(derive_seed(seed, 0x73636F72ull));
  p.for_each([&](double& v) { v = rng.next_gaussian(0.0, scale); });
  return p;
}

void ScorerParameters::for_each(const std::function<void(double&)>& fn) {
  for (double& v : w_self.a) fn(v);
  for (double& v : w_temporal.a) fn(v);
  for (double& v : w_comm.a) fn(v);
  for (double& v : attn_temporal) fn(v);
  for (double& v : attn_comm) fn(v);
  for (double& v : w_out) fn(v);
  fn(b_out);
}

void ScorerParameters::for_each(const std::function<void(double)>& fn) const {
  const_cast<ScorerParameters*>(this)->for_each(
      [&](double& v) { fn(static_cast<double>(v)); });
}

std::vector<double> score_forward(const ScorerParameters& params, const graph::STGraph& g,
                                  ForwardCache* cache) {
  check_shapes(params, g);
  const int n = g.node_count();
  const int ne = static_cast<int>(g.edges.size());

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.self_vec.assign(n, {});
  c.msg_vec.assign(ne, {});
  c.attn_pre.assign(ne, 0.0);
  c.attn_weight.assign(ne, 0.0);
  c.z.assign(n, {});
  c.p.assign(n, 0.0);

  for (int v = 0; v < n; ++v) c.self_vec[v] = matvec(params.w_self, g.nodes[v].response_feat);

  for (int e = 0; e < ne; ++e) {
    const graph::STEdge& ed = g.edges[e];
    bool temporal = ed.etype == graph::EdgeType::temporal;
    const Mat& w = temporal ? params.w_temporal : params.w_comm;
    const std::vector<double>& attn = temporal ? params.attn_temporal : params.attn_comm;
    c.msg_vec[e] = matvec(w, g.nodes[ed.src].response_feat);
    double pre = 0.0;
    for (int i = 0; i < params.h; ++i)
      pre += attn[i] * c.self_vec[ed.dst][i] + attn[params.h + i] * c.msg_vec[e][i];
    c.attn_pre[e] = pre;
  }

  for (int v = 0; v < n; ++v) {
    const auto& in = g.in_edges[v];
    c.z[v] = c.self_vec[v];
    if (!in.empty()) {
      double mx = -1e300;
      for (int e : in) {
        double l = c.attn_pre[e] > 0 ? c.attn_pre[e] : kLeakySlope * c.attn_pre[e];
        mx = std::max(mx, l);
      }
      double denom = 0.0;
      for (int e : in) {
        double l = c.attn_pre[e] > 0 ? c.attn_pre[e] : kLeakySlope * c.attn_pre[e];
        c.attn_weight[e] = std::exp(l - mx);
        denom += c.attn_weight[e];
      }
      for (int e : in) {
        c.attn_weight[e] /= denom;
        for (int i = 0; i < params.h; ++i) c.z[v][i] += c.attn_weight[e] * c.msg_vec[e][i];
      }
    }
    double out = params.b_out;
    for (int i = 0; i < params.h; ++i) out += params.w_out[i] * std::max(0.0, c.z[v][i]);
    c.p[v] = sigmoid(out);
  }
  return c.p;
}

namespace {

// dL/dp for BCE (mean over mask) + neighborhood consistency (sum over edges).
std::vector<double> loss_grad_wrt_p(const std::vector<double>& p, const graph::STGraph& g,
                                    const std::vector<int>& labels, const std::vector<bool>& mask,
                                    double lambda_nc, int mask_count) {
  std::vector<double> gp(p.size(), 0.0);
  for (size_t v = 0; v < p.size(); ++v) {
    if (!mask[v]) continue;
    double ph = std::clamp(p[v], kProbClamp, 1.0 - kProbClamp);
    if (p[v] > kProbClamp && p[v] < 1.0 - kProbClamp)
      gp[v] += (ph - labels[v]) / (ph * (1.0 - ph)) / mask_count;
  }
  if (lambda_nc != 0.0) {
    for (const graph::STEdge& e : g.edges) {
      double d = p[e.src] - p[e.dst];
      gp[e.src] += lambda_nc * 2.0 * d;
      gp[e.dst] -= lambda_nc * 2.0 * d;
    }
  }
  return gp;
}

}  // namespace

double scorer_loss(const ScorerParameters& params, const graph::STGraph& g,
                   const std::vector<int>& labels, const std::vector<bool>& mask,
                   double lambda_nc) {
  std::vector<double> p = score_forward(params, g);
  int mask_count = static_cast<int>(std::count(mask.begin(), mask.end(), true));
  require(mask_count > 0, Errc::invalid_input, "loss mask is empty");
  double bce = 0.0;
  for (size_t v = 0; v < p.size(); ++v) {
    if (!mask[v]) continue;
    double ph = std::clamp(p[v], kProbClamp, 1.0 - kProbClamp);
    bce -= labels[v] * std::log(ph) + (1 - labels[v]) * std::log(1.0 - ph);
  }
  bce /= mask_count;
  double nc = 0.0;
  for (const graph::STEdge& e : g.edges) {
    double d = p[e.src] - p[e.dst];
    nc += d * d;
  }
  return bce + lambda_nc * nc;
}

ScorerParameters score_gradient(const ScorerParameters& params, const graph::STGraph& g,
                                const std::vector<int>& labels, const std::vector<bool>& mask,
                                double lambda_nc) {
  require(labels.size() == static_cast<size_t>(g.node_count()) &&
              mask.size() == labels.size(),
          Errc::invalid_input, "labels/mask must cover every node");
  int mask_count = static_cast<int>(std::count(mask.begin(), mask.end(), true));
  require(mask_count > 0, Errc::invalid_input, "gradient mask is empty");

  ForwardCache c;
  score_forward(params, g, &c);
  const int n = g.node_count();
  const int hdim = params.h;

  ScorerParameters grad = ScorerParameters::zeros(params.d_r, hdim);
  std::vector<double> gp = loss_grad_wrt_p(c.p, g, labels, mask, lambda_nc, mask_count);

  std::vector<std::vector<double>> g_self(n, std::vector<double>(hdim, 0.0));
  std::vector<std::vector<double>> g_msg(g.edges.size());

  for (int v = 0; v < n; ++v) {
    double gpre = gp[v] * c.p[v] * (1.0 - c.p[v]);
    // Head: p = sigmoid(w_out . relu(z) + b_out)
    std::vector<double> gz(hdim, 0.0);
    for (int i = 0; i < hdim; ++i) {
      double relu = std::max(0.0, c.z[v][i]);
      grad.w_out[i] += gpre * relu;
      gz[i] = gpre * params.w_out[i] * (c.z[v][i] > 0 ? 1.0 : 0.0);
    }
    grad.b_out += gpre;

    // z = self + sum alpha_e m_e
    for (int i = 0; i < hdim; ++i) g_self[v][i] += gz[i];
    const auto& in = g.in_edges[v];
    if (in.empty()) continue;

    std::vector<double> g_alpha(in.size(), 0.0);
    for (size_t k = 0; k < in.size(); ++k) {
      int e = in[k];
      g_msg[e].assign(hdim, 0.0);
      for (int i = 0; i < hdim; ++i) g_msg[e][i] += c.attn_weight[e] * gz[i];
      g_alpha[k] = dot(gz, c.msg_vec[e]);
    }
    // Softmax backward over the in-edges of v.
    double weighted = 0.0;
    for (size_t k = 0; k < in.size(); ++k) weighted += c.attn_weight[in[k]] * g_alpha[k];
    for (size_t k = 0; k < in.size(); ++k) {
      int e = in[k];
      double g_logit = c.attn_weight[e] * (g_alpha[k] - weighted);
      double g_pre = g_logit * (c.attn_pre[e] > 0 ? 1.0 : kLeakySlope);
      bool temporal = g.edges[e].etype == graph::EdgeType::temporal;
      const std::vector<double>& attn = temporal ? params.attn_temporal : params.attn_comm;
      std::vector<double>& g_attn = temporal ? grad.attn_temporal : grad.attn_comm;
      for (int i = 0; i < hdim; ++i) {
        g_attn[i] += g_pre * c.self_vec[v][i];
        g_attn[hdim + i] += g_pre * c.msg_vec[e][i];
        g_self[v][i] += g_pre * attn[i];
        g_msg[e][i] += g_pre * attn[hdim + i];
      }
    }
  }

  for (int v = 0; v < n; ++v) add_outer(grad.w_self, g_self[v], g.nodes[v].response_feat);
  for (size_t e = 0; e < g.edges.size(); ++e) {
    if (g_msg[e].empty()) continue;
    bool temporal = g.edges[e].etype == graph::EdgeType::temporal;
    add_outer(temporal ? grad.w_temporal : grad.w_comm, g_msg[e],
              g.nodes[g.edges[e].src].response_feat);
  }
  return grad;
}

namespace {

void apply_step(ScorerParameters& params, const ScorerParameters& grad, double lr) {
  std::vector<double> flat;
  grad.for_each([&](double v) { flat.push_back(v); });
  size_t i = 0;
  params.for_each([&](double& v) { v -= lr * flat[i++]; });
}

graph::STGraph corrupt_graph(const graph::STGraph& g, double rate, Rng& rng,
                             std::vector<int>* labels) {
  graph::STGraph out = g;
  int n = g.node_count();
  int k = std::max(1, static_cast<int>(std::lround(rate * n)));
  k = std::min(k, n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.next_below(static_cast<uint32_t>(i + 1))]);
  labels->assign(n, 0);
  for (int i = 0; i < k; ++i) {
    int v = order[i];
    (*labels)[v] = 1;
    for (double& x : out.nodes[v].response_feat) x = rng.next_gaussian(0.0, 1.0);
  }
  return out;
}

}  // namespace

ScorerParameters pretrain_selfsupervised(ScorerParameters params,
                                         const std::vector<graph::STGraph>& graphs,
                                         const ScorerConfig& cfg) {
  require(!graphs.empty(), Errc::invalid_input, "pretrain corpus is empty");
  require(cfg.corruption_rate > 0.0 && cfg.corruption_rate < 1.0, Errc::invalid_config,
          "corruption_rate must be in (0,1)");
  Rng rng(derive_seed(cfg.rng_seed, 0x70726574ull));
  std::vector<bool> mask;
  std::vector<int> labels;
  for (int step = 0; step < cfg.pretrain_steps; ++step) {
    const graph::STGraph& g = graphs[rng.next_below(static_cast<uint32_t>(graphs.size()))];
    graph::STGraph corrupted = corrupt_graph(g, cfg.corruption_rate, rng, &labels);
    mask.assign(corrupted.node_count(), true);
    ScorerParameters grad = score_gradient(params, corrupted, labels, mask, cfg.lambda_nc);
    apply_step(params, grad, cfg.lr);
  }
  return params;
}

ScorerParameters finetune_supervised(ScorerParameters params,
                                     const std::vector<LabeledGraph>& labeled,
                                     const ScorerConfig& cfg, std::vector<double>* loss_trace) {
  require(!labeled.empty(), Errc::invalid_input, "finetune corpus is empty");
  for (const LabeledGraph& lg : labeled)
    require(!lg.attack_nodes.empty(), Errc::invalid_input,
            "finetune requires attack episodes with nonempty provenance");
  Rng rng(derive_seed(cfg.rng_seed, 0x66696E65ull));
  for (int step = 0; step < cfg.finetune_steps; ++step) {
    const LabeledGraph& lg = labeled[rng.next_below(static_cast<uint32_t>(labeled.size()))];
    int n = lg.graph->node_count();
    std::vector<int> labels(n, 0);
    for (int v : lg.attack_nodes) labels[v] = 1;
    std::vector<bool> mask(n, true);
    if (loss_trace)
      loss_trace->push_back(scorer_loss(params, *lg.graph, labels, mask, cfg.lambda_nc));
    ScorerParameters grad = score_gradient(params, *lg.graph, labels, mask, cfg.lambda_nc);
    apply_step(params, grad, cfg.lr);
  }
  return params;
}

std::vector<int> select_seeds(const std::vector<double>& scores, int k) {
  require(k >= 1, Errc::invalid_input, "K must be >= 1");
  std::vector<int> idx(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) idx[i] = static_cast<int>(i);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  if (static_cast<int>(idx.size()) > k) idx.resize(k);
  return idx;
}

namespace {

void write_array(std::ostream& out, const char* name, const double* data, size_t count) {
  out << name;
  char buf[40];
  for (size_t i = 0; i < count; ++i) {
    std::snprintf(buf, sizeof buf, " %.17g", data[i]);
    out << buf;
  }
  out << "\n";
}

std::vector<double> read_array(std::istream& in, const std::string& expect, size_t count) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::io_error, "checkpoint truncated at " + expect);
  std::istringstream ls(line);
  std::string name;
  ls >> name;
  if (name != expect) throw Error(Errc::io_error, "checkpoint expected array '" + expect + "'");
  std::vector<double> vals(count);
  for (size_t i = 0; i < count; ++i)
    if (!(ls >> vals[i])) throw Error(Errc::io_error, "checkpoint array '" + expect + "' short");
  return vals;
}

}  // namespace

void save_checkpoint(const ScorerParameters& params, std::ostream& out) {
  out << "scorer-ckpt v1 d_R=" << params.d_r << " h=" << params.h << "\n";
  write_array(out, "w_self", params.w_self.a.data(), params.w_self.a.size());
  write_array(out, "w_temporal", params.w_temporal.a.data(), params.w_temporal.a.size());
  write_array(out, "w_comm", params.w_comm.a.data(), params.w_comm.a.size());
  write_array(out, "attn_temporal", params.attn_temporal.data(), params.attn_temporal.size());
  write_array(out, "attn_comm", params.attn_comm.data(), params.attn_comm.size());
  write_array(out, "w_out", params.w_out.data(), params.w_out.size());
  write_array(out, "b_out", &params.b_out, 1);
}

ScorerParameters load_scorer_checkpoint(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw Error(Errc::io_error, "empty scorer checkpoint");
  int d_r = 0, h = 0;
  if (std::sscanf(header.c_str(), "scorer-ckpt v1 d_R=%d h=%d", &d_r, &h) != 2)
    throw Error(Errc::io_error, "bad scorer checkpoint header: " + header);
  ScorerParameters p = ScorerParameters::zeros(d_r, h);
  p.w_self.a = read_array(in, "w_self", p.w_self.a.size());
  p.w_temporal.a = read_array(in, "w_temporal", p.w_temporal.a.size());
  p.w_comm.a = read_array(in, "w_comm", p.w_comm.a.size());
  p.attn_temporal = read_array(in, "attn_temporal", p.attn_temporal.size());
  p.attn_comm = read_array(in, "attn_comm", p.attn_comm.size());
  p.w_out = read_array(in, "w_out", p.w_out.size());
  p.b_out = read_array(in, "b_out", 1)[0];
  return p;
}

}  // namespace propguard::scorer
