#include "piece/sheaf/sheaf.hpp"

#include <set>

#include "piece/error.hpp"
#include "piece/numerics/eigen.hpp"

namespace piece::sheaf {

using num::Tape;
using num::Tensor;
using num::Var;

Tensor DialogueGraph::adjacency() const {
  Tensor a = Tensor::zeros({nodes, nodes});
  for (const Edge& e : edges) {
    a[e.from * nodes + e.to] = 1.0;
    a[e.to * nodes + e.from] = 1.0;
  }
  return a;
}

void validate_graph(const DialogueGraph& g) {
  if (g.nodes == 0) throw ShapeError("graph has no nodes");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const Edge& e : g.edges) {
    if (e.from >= g.nodes || e.to >= g.nodes) throw ShapeError("graph edge endpoint out of range");
    if (e.from == e.to) throw ShapeError("graph self edge");
    if (!seen.insert(std::minmax(e.from, e.to)).second) throw ShapeError("graph duplicate edge");
  }
}

DialogueGraph build_graph(const corpus::Dialogue& dialogue, const GraphConfig& config) {
  DialogueGraph g;
  g.nodes = dialogue.size();
  if (g.nodes == 0) throw DataError("build_graph: empty dialogue");
  for (std::size_t i = 0; i + 1 < g.nodes; ++i) g.edges.push_back({i, i + 1, EdgeKind::Chain});
  if (config.same_speaker_edges) {
    for (std::size_t i = 0; i < g.nodes; ++i) {
      for (std::size_t j = i + 1; j < g.nodes; ++j) {
        if (dialogue.utterances[j].speaker != dialogue.utterances[i].speaker) continue;
        if (j != i + 1) g.edges.push_back({i, j, EdgeKind::SameSpeaker});
        break;
      }
    }
  }
  return g;
}

MapLearner MapLearner::init(const num::Initializer& init, const std::string& name, std::size_t feature_dim,
                            const SheafConfig& config) {
  if (config.stalk_dim == 0) throw UsageError("stalk dimension must be positive");
  const std::size_t width = config.diagonal_maps ? config.stalk_dim : config.stalk_dim * config.stalk_dim;
  return MapLearner{num::Dense::init(init, name + ".map", 2 * feature_dim, width), config.stalk_dim,
                    config.diagonal_maps};
}

void MapLearner::collect(const std::string& prefix, num::NamedParams& out) { map.collect(prefix + "map.", out); }

Var MapLearner::restriction(Var node, Var other) const {
  Var m = num::tanh(map.forward(num::concat_cols({node, other})));
  return diagonal ? num::diag_from_row(m) : num::reshape(m, stalk_dim, stalk_dim);
}

SheafStructure learn_restriction_maps(const DialogueGraph& graph, Var features, const MapLearner& learner) {
  if (features.rows() != graph.nodes) throw ShapeError("learn_restriction_maps: feature rows differ from nodes");
  if (2 * features.cols() != learner.map.in()) throw ShapeError("learn_restriction_maps: feature width mismatch");
  SheafStructure s;
  s.stalk_dim = learner.stalk_dim;
  for (const Edge& e : graph.edges) {
    Var xf = num::slice_rows(features, e.from, 1), xt = num::slice_rows(features, e.to, 1);
    s.from_maps.push_back(learner.restriction(xf, xt));
    s.to_maps.push_back(learner.restriction(xt, xf));
  }
  return s;
}

SheafLaplacian assemble_laplacian(Tape& tape, const DialogueGraph& graph, const SheafStructure& sheaf) {
  validate_graph(graph);
  const std::size_t ds = sheaf.stalk_dim, o = graph.nodes;
  if (ds == 0 || sheaf.from_maps.size() != graph.edges.size() || sheaf.to_maps.size() != graph.edges.size()) {
    throw ShapeError("assemble_laplacian: one map pair per edge required");
  }
  if (graph.edges.empty()) {
    Var zero = tape.constant(Tensor::zeros({o * ds, o * ds}));
    return {zero, zero};
  }
  // Coboundary: edge row-block e has F_{to<e} at `to` and -F_{from<e} at `from`.
  std::vector<num::Block> cob;
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const Edge& e = graph.edges[k];
    for (Var m : {sheaf.from_maps[k], sheaf.to_maps[k]})
      if (m.rows() != ds || m.cols() != ds) throw ShapeError("assemble_laplacian: map is not d_s x d_s");
    cob.push_back({k, e.to, sheaf.to_maps[k], 1.0});
    cob.push_back({k, e.from, sheaf.from_maps[k], -1.0});
  }
  Var delta = num::assemble_blocks(graph.edges.size(), o, cob);
  Var lap = num::matmul(num::transpose(delta), delta);

  std::vector<num::Block> roots;
  for (std::size_t v = 0; v < o; ++v) {
    Var degree = num::slice_cols(num::slice_rows(lap, v * ds, ds), v * ds, ds);
    roots.push_back({v, v, num::psd_inverse_sqrt(degree), 1.0});
  }
  Var s = num::assemble_blocks(o, o, roots);
  return {lap, num::matmul(num::matmul(s, lap), s)};
}

ConvolutionParams ConvolutionParams::init(const num::Initializer& init, const std::string& name,
                                          std::size_t feature_dim, const SheafConfig& config) {
  const std::size_t ds = config.stalk_dim, d = config.out_dim;
  if (ds == 0 || d == 0) throw UsageError("sheaf dimensions must be positive");
  return ConvolutionParams{init.uniform(name + ".stalk_mix", {ds, ds}, ds),
                           init.uniform(name + ".feature_map", {feature_dim, d}, feature_dim),
                           num::Dense::init(init, name + ".projection", ds * d, d)};
}

void ConvolutionParams::collect(const std::string& prefix, num::NamedParams& out) {
  out.emplace_back(prefix + "stalk_mix", &stalk_mix);
  out.emplace_back(prefix + "feature_map", &feature_map);
  projection.collect(prefix + "projection.", out);
}

Var sheaf_convolve(Var laplacian, Var features, const ConvolutionParams& params, std::size_t stalk_dim) {
  const std::size_t o = features.rows(), ds = stalk_dim;
  if (laplacian.rows() != o * ds || laplacian.cols() != o * ds) throw ShapeError("sheaf_convolve: Laplacian size");
  if (params.stalk_mix.rows() != ds || params.feature_map.rows() != features.cols()) {
    throw ShapeError("sheaf_convolve: parameter widths");
  }
  Tape& tape = features.tape();
  Var diffusion = num::sub(tape.constant(Tensor::identity(o * ds)), laplacian);
  Var lifted = num::repeat_rows(features, ds);
  Var mixed = num::matmul(num::kron_identity(tape.param(params.stalk_mix), o), lifted);
  Var out = num::relu(num::matmul(num::matmul(diffusion, mixed), tape.param(params.feature_map)));
  return num::reshape(out, o, ds * params.feature_map.cols());
}

Var project_structural(Var r_scn, const num::Dense& projection) {
  if (r_scn.cols() != projection.in()) throw ShapeError("project_structural: width mismatch");
  return num::relu(projection.forward(r_scn));
}

SheafParams SheafParams::init(const num::Initializer& init, const std::string& name, std::size_t feature_dim,
                              const SheafConfig& config) {
  return SheafParams{MapLearner::init(init, name + ".learner", feature_dim, config),
                     ConvolutionParams::init(init, name + ".conv", feature_dim, config), config};
}

void SheafParams::collect(const std::string& prefix, num::NamedParams& out) {
  learner.collect(prefix + "learner.", out);
  conv.collect(prefix + "conv.", out);
}

StructuralResult encode_structure(Tape& tape, const DialogueGraph& graph, Var features, const SheafParams& params) {
  SheafStructure sheaf = learn_restriction_maps(graph, features, params.learner);
  SheafLaplacian lap = assemble_laplacian(tape, graph, sheaf);
  Var r_scn = sheaf_convolve(lap.normalized, features, params.conv, params.config.stalk_dim);
  return {lap.normalized, project_structural(r_scn, params.conv.projection)};
}

SpectralRange spectral_range(const Tensor& symmetric) {
  const num::SymmetricEigen e = num::symmetric_eigen(symmetric);
  return {e.values.front(), e.values.back()};
}

}  // namespace piece::sheaf
