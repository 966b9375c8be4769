#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <vector>

#include "propguard/st_graph.hpp"

namespace propguard::scorer {

// Minimal row-major dense matrix; everything here is small (h x d_R).
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
};

// One edge-type-aware attention layer with a ReLU head. Messages from
// temporal and communication in-edges use separate transforms and separate
// attention vectors; a single softmax runs over all in-edges of a node.
struct ScorerParameters {
  int d_r = 0;
  int h = 0;
  Mat w_self;                         // h x d_R
  Mat w_temporal;                     // h x d_R
  Mat w_comm;                         // h x d_R
  std::vector<double> attn_temporal;  // 2h
  std::vector<double> attn_comm;      // 2h
  std::vector<double> w_out;          // h
  double b_out = 0.0;

  static ScorerParameters zeros(int d_r, int h);
  static ScorerParameters random_init(int d_r, int h, uint64_t seed, double scale = 0.1);

  // Visits every scalar parameter in a fixed order (checkpoint order).
  void for_each(const std::function<void(double&)>& fn);
  void for_each(const std::function<void(double)>& fn) const;
};

struct ScorerConfig {
  double lr = 1e-2;
  int pretrain_steps = 500;
  int finetune_steps = 300;
  double corruption_rate = 0.3;
  double lambda_nc = 0.01;  // neighborhood consistency weight
  uint64_t rng_seed = 0;
};

constexpr double kLeakySlope = 0.2;
constexpr double kProbClamp = 1e-7;

struct ForwardCache {
  std::vector<std::vector<double>> self_vec;  // per node, h
  std::vector<std::vector<double>> msg_vec;   // per edge, h
  std::vector<double> attn_pre;               // per edge, pre-leaky logit
  std::vector<double> attn_weight;            // per edge, softmax weight
  std::vector<std::vector<double>> z;         // per node, h
  std::vector<double> p;                      // per node
};

// Risk priors p(v) in (0,1) on the response-centric view.
std::vector<double> score_forward(const ScorerParameters& params, const graph::STGraph& g,
                                  ForwardCache* cache = nullptr);

// L = BCE(p, labels over mask) + lambda_nc * sum_{(u,v) in E} (p(u)-p(v))^2.
double scorer_loss(const ScorerParameters& params, const graph::STGraph& g,
                   const std::vector<int>& labels, const std::vector<bool>& mask,
                   double lambda_nc);

// Analytic gradient of scorer_loss, shaped like the parameters.
ScorerParameters score_gradient(const ScorerParameters& params, const graph::STGraph& g,
                                const std::vector<int>& labels, const std::vector<bool>& mask,
                                double lambda_nc);

// Self-supervised stage: corrupt a fraction of node features with unit
// Gaussians, label corrupted vs clean, one gradient step per sampled graph.
ScorerParameters pretrain_selfsupervised(ScorerParameters params,
                                         const std::vector<graph::STGraph>& graphs,
                                         const ScorerConfig& cfg);

struct LabeledGraph {
  const graph::STGraph* graph = nullptr;
  std::set<int> attack_nodes;  // Z membership as node indices
};

ScorerParameters finetune_supervised(ScorerParameters params,
                                     const std::vector<LabeledGraph>& labeled,
                                     const ScorerConfig& cfg,
                                     std::vector<double>* loss_trace = nullptr);

// Indices of the K highest scores, ties broken by the smaller node index.
std::vector<int> select_seeds(const std::vector<double>& scores, int k);

void save_checkpoint(const ScorerParameters& params, std::ostream& out);
ScorerParameters load_scorer_checkpoint(std::istream& in);

}  // namespace propguard::scorer
