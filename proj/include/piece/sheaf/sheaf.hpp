#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "piece/corpus/types.hpp"
#include "piece/numerics/layers.hpp"

namespace piece::sheaf {

enum class EdgeKind { Chain, SameSpeaker };

// Directed along the dialogue (from < to); undirected for Laplacian assembly.
struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  EdgeKind kind = EdgeKind::Chain;
  bool operator==(const Edge&) const = default;
};

struct DialogueGraph {
  std::size_t nodes = 0;
  std::vector<Edge> edges;

  // Symmetric 0/1 adjacency, nodes x nodes.
  num::Tensor adjacency() const;
};

struct GraphConfig {
  bool same_speaker_edges = false;
};

// Chain edges (i, i+1); with same_speaker_edges also (i, j) for j the next
// utterance by the same speaker, unless j == i + 1.
DialogueGraph build_graph(const corpus::Dialogue& dialogue, const GraphConfig& config = {});
// Throws ShapeError on out-of-range, self or duplicate (unordered) edges.
void validate_graph(const DialogueGraph& graph);

struct SheafConfig {
  std::size_t stalk_dim = 2;
  std::size_t out_dim = 64;
  bool diagonal_maps = true;
};

// Restriction maps F_{v<e} from the concatenated endpoint features.
struct MapLearner {
  num::Dense map;  // 2f -> d_s (diagonal) or d_s * d_s (dense)
  std::size_t stalk_dim = 0;
  bool diagonal = true;

  static MapLearner init(const num::Initializer& init, const std::string& name, std::size_t feature_dim,
                         const SheafConfig& config);
  void collect(const std::string& prefix, num::NamedParams& out);
  // d_s x d_s map of `node` on an edge whose other endpoint is `other` (rows are 1 x f).
  num::Var restriction(num::Var node, num::Var other) const;
};

struct SheafStructure {
  std::size_t stalk_dim = 0;
  std::vector<num::Var> from_maps;  // F_{from<e}, per edge
  std::vector<num::Var> to_maps;    // F_{to<e}, per edge
};

SheafStructure learn_restriction_maps(const DialogueGraph& graph, num::Var features, const MapLearner& learner);

struct SheafLaplacian {
  num::Var unnormalized;  // delta^T delta
  num::Var normalized;    // D^{-1/2} L D^{-1/2}
};

// Requires one map pair per edge; all maps d_s x d_s.
SheafLaplacian assemble_laplacian(num::Tape& tape, const DialogueGraph& graph, const SheafStructure& sheaf);

struct ConvolutionParams {
  num::Tensor stalk_mix;     // W1, d_s x d_s
  num::Tensor feature_map;   // W2, f x d
  num::Dense projection;     // d_s * d -> d

  static ConvolutionParams init(const num::Initializer& init, const std::string& name, std::size_t feature_dim,
                                const SheafConfig& config);
  void collect(const std::string& prefix, num::NamedParams& out);
};

// relu((I - Delta)(I_o (x) W1) X~ W2) with X~ each node row repeated d_s times,
// reshaped to o x (d_s * d).
num::Var sheaf_convolve(num::Var laplacian, num::Var features, const ConvolutionParams& params,
                        std::size_t stalk_dim);
// relu(r_scn W + b), o x d.
num::Var project_structural(num::Var r_scn, const num::Dense& projection);

struct SheafParams {
  MapLearner learner;
  ConvolutionParams conv;
  SheafConfig config;

  static SheafParams init(const num::Initializer& init, const std::string& name, std::size_t feature_dim,
                          const SheafConfig& config);
  void collect(const std::string& prefix, num::NamedParams& out);
};

struct StructuralResult {
  num::Var laplacian;  // normalized
  num::Var r_s;        // o x d
};

StructuralResult encode_structure(num::Tape& tape, const DialogueGraph& graph, num::Var features,
                                  const SheafParams& params);

struct SpectralRange {
  double min = 0.0;
  double max = 0.0;
};
SpectralRange spectral_range(const num::Tensor& symmetric);

}  // namespace piece::sheaf
