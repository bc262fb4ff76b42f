// The weighted partial regular vine: structure model, bottom-to-top
// construction driven by partial correlations and the tree inverse indicator,
// weighted-determinant scoring, truncation, per-edge copula assignment and
// full log-density evaluation (scalar and tape).
//
// Tree T_1 sits on the variables; tree T_j (j >= 2) sits on the edges of
// T_{j-1}. Construction runs from the bottom tree T_{n-1} upward: the single
// bottom edge takes the globally weakest partial correlation, and each level
// chooses conditioned pairs optimizing the level criterion subject to the
// regularity constraints (proximity, distinct constraint sets, tree shape).
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wpvc/depstats.hpp"
#include "wpvc/diffcore.hpp"
#include "wpvc/paircopula.hpp"

namespace wpvc::vine {

struct VineEdge {
    int a = -1;                    // conditioned pair, a < b
    int b = -1;
    std::vector<int> conditioning; // sorted
    double partial_rho = 0.0;
    bool truncated = false;
    copula::PairCopula pair_copula;

    // Evaluation wiring (filled by the builder / deserializer): indices of
    // the two m-children in the tree below, or variable ids at tree 1.
    // child_a supplies F(a | conditioning), child_b supplies F(b | ...).
    int child_a = -1;
    int child_b = -1;

    std::uint32_t union_mask() const;
    std::uint32_t conditioning_mask() const;
};

struct VineTree {
    int level = 0; // 1-based; tree 1 couples raw variables
    std::vector<VineEdge> edges;
};

struct EdgeWeightMatrix {
    int n = 0;
    std::vector<double> w; // per conditioned pair, symmetric, default 1

    static EdgeWeightMatrix uniform(int n);
    double at(int a, int b) const { return w[static_cast<std::size_t>(a) * n + b]; }
    void set(int a, int b, double weight);
};

struct VineStructure {
    int n = 0;
    std::vector<VineTree> trees; // trees[j-1] holds T_j
    int inverse_indicator = 0;   // l
    double score = 0.0;          // R
    double rho_trun = 0.0;

    int edge_count() const;
    int active_edge_count() const; // edges not flagged truncated
    int fitted_param_count() const;

    VineEdge& edge(int tree_level, int idx) { return trees[tree_level - 1].edges[idx]; }
    const VineEdge& edge(int tree_level, int idx) const { return trees[tree_level - 1].edges[idx]; }
};

// Throws StructuralError unless the structure is a regular vine: n-1 trees,
// tree T_j has n-j edges, proximity holds, every unordered pair appears as a
// conditioned set exactly once, and the m-children wiring is consistent.
void validate_structure(const VineStructure& v);

// One candidate construction for a fixed tree inverse indicator l
// (ceil(n/2) <= l <= n-1). Trees strictly below the inverse level minimize
// the sum of |partial rho|; trees at or above it minimize the sum of
// log(1 - rho^2), floating the strongest correlations to the top. The bottom
// edge always takes the globally weakest partial correlation.
VineStructure build_candidate_vine(const stats::CorrelationMatrix& corr, int inverse_indicator,
                                   const EdgeWeightMatrix& weights);

// R = -log prod_e (1 - W_e rho_e^2); larger is better.
double score_vine(const VineStructure& v, const EdgeWeightMatrix& weights);

struct SelectionDiagnostics {
    std::vector<std::pair<int, double>> candidate_scores; // (l, R)
};

// Builds one candidate per l in {n-1, ..., ceil(n/2)} and returns the score
// maximizer (ties resolved toward smaller l).
VineStructure select_structure(const stats::CorrelationMatrix& corr,
                               const EdgeWeightMatrix& weights,
                               SelectionDiagnostics* diagnostics = nullptr);

// Flags every edge with |partial_rho| < rho_trun as truncated (density
// contribution 1); the structure itself is unchanged.
VineStructure truncate(VineStructure v, double rho_trun);

// Tree-by-tree family selection and fit on h-transformed pseudo-observations.
// Truncated edges are skipped and propagate their arguments unchanged.
VineStructure assign_copulas(VineStructure v, const stats::PseudoObservations& pobs,
                             std::span<const copula::CopulaFamily> candidates);

// Sum of log pair-copula densities over the non-truncated edges. Coordinates
// on the boundary are clamped into (0,1); `boundary_clamps` counts them.
double vine_log_density(const VineStructure& v, std::span<const double> u,
                        std::uint64_t* boundary_clamps = nullptr);

// Tape variant with the copula parameters supplied as graph variables in
// collect_edge_params order; gradients flow to both u and the parameters.
ad::Var vine_log_density_graph(const VineStructure& v, ad::Tape& tape,
                               std::span<const ad::Var> u,
                               std::span<const ad::Var> edge_params);

// Flattened parameters of the non-truncated edges, in tree/edge order.
std::vector<double> collect_edge_params(const VineStructure& v);
void set_edge_params(VineStructure& v, std::span<const double> params);

// Text serialization (header + one line per edge). Round-trips losslessly.
std::string to_text(const VineStructure& v);
VineStructure from_text(const std::string& text);

} // namespace wpvc::vine
