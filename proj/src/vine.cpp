#include "wpvc/vine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "wpvc/errors.hpp"

namespace wpvc::vine {

using copula::CopulaFamily;
using copula::PairCopula;
using stats::CorrelationMatrix;

namespace {

std::uint32_t bit(int i) { return 1u << i; }

std::vector<int> mask_to_vec(std::uint32_t mask) {
    std::vector<int> out;
    for (int i = 0; mask; ++i, mask >>= 1)
        if (mask & 1u) out.push_back(i);
    return out;
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

std::uint32_t VineEdge::union_mask() const {
    std::uint32_t m = bit(a) | bit(b);
    for (int c : conditioning) m |= bit(c);
    return m;
}

std::uint32_t VineEdge::conditioning_mask() const {
    std::uint32_t m = 0;
    for (int c : conditioning) m |= bit(c);
    return m;
}

EdgeWeightMatrix EdgeWeightMatrix::uniform(int n) {
    EdgeWeightMatrix w;
    w.n = n;
    w.w.assign(static_cast<std::size_t>(n) * n, 1.0);
    return w;
}

void EdgeWeightMatrix::set(int a, int b, double weight) {
    if (weight < 0.0) throw DomainError("edge weight must be nonnegative");
    w[static_cast<std::size_t>(a) * n + b] = weight;
    w[static_cast<std::size_t>(b) * n + a] = weight;
}

int VineStructure::edge_count() const {
    int c = 0;
    for (const auto& t : trees) c += static_cast<int>(t.edges.size());
    return c;
}

int VineStructure::active_edge_count() const {
    int c = 0;
    for (const auto& t : trees)
        for (const auto& e : t.edges)
            if (!e.truncated) ++c;
    return c;
}

int VineStructure::fitted_param_count() const {
    int c = 0;
    for (const auto& t : trees)
        for (const auto& e : t.edges)
            if (!e.truncated) c += copula::param_count(e.pair_copula.family);
    return c;
}

// ---------------------------------------------------------------------------
// Construction.

namespace {

struct Slot {
    std::uint32_t mask = 0;
    int demands[2] = {-1, -1};
    int ndem = 0;

    bool has_demand(int d) const { return (ndem > 0 && demands[0] == d) || (ndem > 1 && demands[1] == d); }
};

struct Candidate {
    int a = 0, b = 0;
    double score = 0.0;
    double rho = 0.0;
};

// Feasible pair assignment for one tree level: every slot picks a conditioned
// pair containing its demands, spawned children must collapse to
// (#slots + 1) distinct constraint sets without cycles, and each child may
// accumulate at most two distinct demands (its own future conditioned pair).
class LevelSearch {
  public:
    LevelSearch(std::vector<Slot> slots, std::vector<std::vector<Candidate>> cands,
                std::uint64_t budget)
        : slots_(std::move(slots)), cands_(std::move(cands)), budget_(budget) {
        const std::size_t m = slots_.size();
        suffix_min_.assign(m + 1, 0.0);
        for (std::size_t s = m; s-- > 0;) {
            double mn = cands_[s].empty() ? 0.0 : cands_[s][0].score;
            for (const auto& c : cands_[s]) mn = std::min(mn, c.score);
            suffix_min_[s] = suffix_min_[s + 1] + mn;
        }
    }

    bool optimum(std::vector<int>& out) {
        best_cost_ = 1e300;
        best_.clear();
        accept_first_ = false;
        steps_ = 0;
        yield_ = nullptr;
        reset_state();
        choice_.assign(slots_.size(), -1);
        dfs(0, 0.0);
        if (best_.empty()) return false;
        out = best_;
        return true;
    }

    // Calls `fn` for each feasible assignment in search order until it
    // returns true. Returns whether some assignment was accepted.
    bool enumerate(const std::function<bool(const std::vector<int>&)>& fn) {
        best_cost_ = 1e300;
        best_.clear();
        accept_first_ = false;
        steps_ = 0;
        yield_ = &fn;
        accepted_ = false;
        reset_state();
        choice_.assign(slots_.size(), -1);
        dfs(0, 0.0);
        return accepted_;
    }

    const std::vector<std::vector<Candidate>>& candidates() const { return cands_; }

  private:
    struct Child {
        std::uint32_t mask = 0;
        int demands[2] = {-1, -1};
        int ndem = 0;
    };

    void reset_state() {
        registry_.clear();
        children_.clear();
        uf_parent_.clear();
        uf_size_.clear();
    }

    int uf_find(int x) const {
        while (uf_parent_[x] != x) x = uf_parent_[x];
        return x;
    }

    struct Undo {
        std::vector<int> created;                  // child ids created
        std::vector<std::pair<int, int>> demands;  // (child id, previous ndem)
        std::vector<std::pair<int, int>> unions;   // (attached root, previous size holder)
    };

    // Registers one spawned child; returns its id or -1 on demand overflow.
    int touch_child(std::uint32_t mask, int demand, Undo& undo) {
        auto it = registry_.find(mask);
        if (it == registry_.end()) {
            const int id = static_cast<int>(children_.size());
            Child c;
            c.mask = mask;
            c.demands[0] = demand;
            c.ndem = 1;
            children_.push_back(c);
            uf_parent_.push_back(id);
            uf_size_.push_back(1);
            registry_.emplace(mask, id);
            undo.created.push_back(id);
            return id;
        }
        Child& c = children_[it->second];
        const bool have = (c.ndem > 0 && c.demands[0] == demand) ||
                          (c.ndem > 1 && c.demands[1] == demand);
        if (!have) {
            if (c.ndem == 2) return -1; // a third distinct demand is unsatisfiable
            undo.demands.emplace_back(it->second, c.ndem);
            c.demands[c.ndem++] = demand;
        }
        return it->second;
    }

    void rollback(const Undo& undo) {
        for (auto [root, prev] : undo.unions) {
            uf_size_[uf_parent_[root]] -= uf_size_[root];
            uf_parent_[root] = root;
            (void)prev;
        }
        for (auto it = undo.demands.rbegin(); it != undo.demands.rend(); ++it)
            children_[it->first].ndem = it->second;
        for (auto it = undo.created.rbegin(); it != undo.created.rend(); ++it) {
            registry_.erase(children_[*it].mask);
            children_.pop_back();
            uf_parent_.pop_back();
            uf_size_.pop_back();
        }
    }

    // Returns true when the search should stop entirely.
    bool dfs(std::size_t s, double cost) {
        if (s == slots_.size()) {
            // Acyclic with m edges forces exactly m+1 connected children.
            if (children_.size() != slots_.size() + 1) return false;
            if (yield_) {
                if ((*yield_)(choice_)) {
                    accepted_ = true;
                    return true;
                }
                return false;
            }
            if (cost < best_cost_) {
                best_cost_ = cost;
                best_ = choice_;
            }
            return accept_first_;
        }
        for (std::size_t ci = 0; ci < cands_[s].size(); ++ci) {
            if (++steps_ > budget_) {
                if (!best_.empty() || accepted_) return true;
                if (yield_ && steps_ > 4 * budget_) return true; // enumeration cap
                accept_first_ = true; // keep going, take the first feasible leaf
            }
            const Candidate& c = cands_[s][ci];
            if (!yield_ && !accept_first_ && cost + c.score + suffix_min_[s + 1] >= best_cost_)
                continue;

            Undo undo;
            bool ok = true;
            const std::uint32_t mask = slots_[s].mask;
            const int ca = touch_child(mask & ~bit(c.b), c.a, undo);
            const int cb = ok && ca >= 0 ? touch_child(mask & ~bit(c.a), c.b, undo) : -1;
            ok = ca >= 0 && cb >= 0;
            if (ok && children_.size() > slots_.size() + 1) ok = false;
            if (ok) {
                const int ra = uf_find(ca), rb = uf_find(cb);
                if (ra == rb) {
                    ok = false; // cycle among constraint sets
                } else {
                    int small = ra, big = rb;
                    if (uf_size_[small] > uf_size_[big]) std::swap(small, big);
                    uf_parent_[small] = big;
                    uf_size_[big] += uf_size_[small];
                    undo.unions.emplace_back(small, 0);
                }
            }
            if (ok) {
                choice_[s] = static_cast<int>(ci);
                if (dfs(s + 1, cost + c.score)) return true;
                choice_[s] = -1;
            }
            rollback(undo);
        }
        return false;
    }

  public:
    // Children implied by an assignment, computed without touching the
    // search state (the enumerator may be suspended on it).
    std::vector<Slot> commit_children(const std::vector<int>& choice) const {
        std::unordered_map<std::uint32_t, Slot> reg;
        auto touch = [&](std::uint32_t mask, int demand) {
            Slot& sl = reg[mask];
            sl.mask = mask;
            if (!sl.has_demand(demand)) {
                if (sl.ndem == 2)
                    throw StructuralError("vine builder: invalid committed assignment");
                sl.demands[sl.ndem++] = demand;
            }
        };
        for (std::size_t s = 0; s < slots_.size(); ++s) {
            const Candidate& c = cands_[s][choice[s]];
            touch(slots_[s].mask & ~bit(c.b), c.a);
            touch(slots_[s].mask & ~bit(c.a), c.b);
        }
        std::vector<Slot> out;
        out.reserve(reg.size());
        for (const auto& [mask, sl] : reg) out.push_back(sl);
        std::sort(out.begin(), out.end(), [](const Slot& a, const Slot& b) { return a.mask < b.mask; });
        return out;
    }

  private:
    std::vector<Slot> slots_;
    std::vector<std::vector<Candidate>> cands_;
    std::uint64_t budget_ = 0;
    std::uint64_t steps_ = 0;
    std::vector<double> suffix_min_;

    std::unordered_map<std::uint32_t, int> registry_;
    std::vector<Child> children_;
    std::vector<int> uf_parent_;
    std::vector<int> uf_size_;

    std::vector<int> choice_;
    std::vector<int> best_;
    double best_cost_ = 1e300;
    bool accept_first_ = false;
    bool accepted_ = false;
    const std::function<bool(const std::vector<int>&)>* yield_ = nullptr;
};

class Builder {
  public:
    Builder(const CorrelationMatrix& corr, int l, const EdgeWeightMatrix& weights)
        : corr_(corr), n_(corr.n), l_(l), weights_(weights), cache_(corr) {
        if (n_ < 2) throw DomainError("vine: need at least 2 variables");
        if (n_ > 32) throw DomainError("vine: limited to 32 variables");
        const int lo = (n_ + 1) / 2;
        if (l < lo || l > n_ - 1)
            throw RangeError("vine: inverse indicator " + std::to_string(l) + " outside [" +
                             std::to_string(lo) + "," + std::to_string(n_ - 1) + "]");
        levels_.resize(n_);
    }

    VineStructure run() {
        Slot root;
        root.mask = n_ == 32 ? 0xffffffffu : (bit(n_) - 1u);
        if (!build_down(n_ - 1, {root}))
            throw StructuralError("vine: construction search exhausted without a regular vine");
        return finalize();
    }

  private:
    double pair_score(int level, double rho) const {
        // Trees strictly below the inverse level collect the weakest partial
        // correlations; trees at or above it the strongest. The bottom tree
        // is always seeded with the globally weakest pair.
        const bool weakest = (level == n_ - 1) || (level > l_);
        if (weakest) return std::fabs(rho);
        const double om = std::max(1.0 - rho * rho, 1e-15);
        return std::log(om);
    }

    std::vector<std::vector<Candidate>> make_candidates(int level, const std::vector<Slot>& slots) {
        std::vector<std::vector<Candidate>> out(slots.size());
        for (std::size_t s = 0; s < slots.size(); ++s) {
            const auto vars = mask_to_vec(slots[s].mask);
            for (std::size_t i = 0; i < vars.size(); ++i) {
                for (std::size_t j = i + 1; j < vars.size(); ++j) {
                    const int a = vars[i], b = vars[j];
                    if (slots[s].ndem > 0 && !slots[s].has_demand(a) && !slots[s].has_demand(b))
                        continue;
                    if (slots[s].ndem == 2 && !(slots[s].has_demand(a) && slots[s].has_demand(b)))
                        continue;
                    Candidate c;
                    c.a = a;
                    c.b = b;
                    const std::uint32_t cond = slots[s].mask & ~(bit(a) | bit(b));
                    c.rho = cache_.get(a, b, cond);
                    c.score = pair_score(level, c.rho);
                    out[s].push_back(c);
                }
            }
            std::sort(out[s].begin(), out[s].end(), [](const Candidate& x, const Candidate& y) {
                if (x.score != y.score) return x.score < y.score;
                if (x.a != y.a) return x.a < y.a;
                return x.b < y.b;
            });
        }
        return out;
    }

    void commit_level(int level, const std::vector<Slot>& slots,
                      const std::vector<std::vector<Candidate>>& cands,
                      const std::vector<int>& choice) {
        levels_[level].clear();
        for (std::size_t s = 0; s < slots.size(); ++s) {
            const Candidate& c = cands[s][choice[s]];
            VineEdge e;
            e.a = std::min(c.a, c.b);
            e.b = std::max(c.a, c.b);
            e.conditioning = mask_to_vec(slots[s].mask & ~(bit(c.a) | bit(c.b)));
            e.partial_rho = c.rho;
            levels_[level].push_back(std::move(e));
        }
    }

    bool build_down(int level, std::vector<Slot> slots) {
        if (level == 0) return true;
        auto cands = make_candidates(level, slots);
        for (const auto& cs : cands)
            if (cs.empty()) return false;

        LevelSearch search(slots, cands, 4'000'000);
        std::vector<int> choice;
        if (!search.optimum(choice)) return false;

        commit_level(level, slots, cands, choice);
        if (build_down(level - 1, search.commit_children(choice))) return true;

        // The optimal level assignment admitted no regular completion below;
        // fall back to ordered enumeration of the remaining assignments.
        ++fallbacks_;
        const std::vector<int> tried = choice;
        return search.enumerate([&](const std::vector<int>& alt) {
            if (alt == tried) return false;
            commit_level(level, slots, cands, alt);
            return build_down(level - 1, search.commit_children(alt));
        });
    }

    VineStructure finalize() {
        VineStructure v;
        v.n = n_;
        v.inverse_indicator = l_;
        v.trees.resize(n_ - 1);
        for (int level = 1; level <= n_ - 1; ++level) {
            VineTree t;
            t.level = level;
            t.edges = levels_[level];
            std::sort(t.edges.begin(), t.edges.end(), [](const VineEdge& x, const VineEdge& y) {
                if (x.a != y.a) return x.a < y.a;
                return x.b < y.b;
            });
            v.trees[level - 1] = std::move(t);
        }
        wire_children(v);
        v.score = score_vine(v, weights_);
        return v;
    }

  public:
    static void wire_children(VineStructure& v) {
        for (int level = 1; level <= v.n - 1; ++level) {
            auto& tree = v.trees[level - 1];
            if (level == 1) {
                for (auto& e : tree.edges) {
                    e.child_a = e.a;
                    e.child_b = e.b;
                }
                continue;
            }
            std::unordered_map<std::uint32_t, int> below;
            const auto& lower = v.trees[level - 2].edges;
            for (std::size_t i = 0; i < lower.size(); ++i)
                below.emplace(lower[i].union_mask(), static_cast<int>(i));
            for (auto& e : tree.edges) {
                const std::uint32_t u = e.union_mask();
                auto ita = below.find(u & ~bit(e.b));
                auto itb = below.find(u & ~bit(e.a));
                if (ita == below.end() || itb == below.end())
                    throw StructuralError("vine: m-children missing for an edge");
                e.child_a = ita->second;
                e.child_b = itb->second;
            }
        }
    }

    int fallbacks() const { return fallbacks_; }

  private:
    const CorrelationMatrix& corr_;
    int n_;
    int l_;
    const EdgeWeightMatrix& weights_;
    stats::PartialCorrelationCache cache_;
    std::vector<std::vector<VineEdge>> levels_;
    int fallbacks_ = 0;
};

} // namespace

VineStructure build_candidate_vine(const CorrelationMatrix& corr, int inverse_indicator,
                                   const EdgeWeightMatrix& weights) {
    corr.validate();
    Builder b(corr, inverse_indicator, weights);
    VineStructure v = b.run();
    validate_structure(v);
    return v;
}

double score_vine(const VineStructure& v, const EdgeWeightMatrix& weights) {
    double r = 0.0;
    for (const auto& t : v.trees) {
        for (const auto& e : t.edges) {
            const double w = weights.at(e.a, e.b);
            if (w < 0.0) throw DomainError("score_vine: negative weight");
            const double x = w * e.partial_rho * e.partial_rho;
            if (x >= 1.0)
                throw DomainError("score_vine: W * rho^2 >= 1 on edge {" + std::to_string(e.a) +
                                  "," + std::to_string(e.b) + "}");
            r -= std::log1p(-x);
        }
    }
    return r;
}

VineStructure select_structure(const CorrelationMatrix& corr, const EdgeWeightMatrix& weights,
                               SelectionDiagnostics* diagnostics) {
    const int n = corr.n;
    if (n < 2) throw DomainError("select_structure: need at least 2 variables");
    const int lo = (n + 1) / 2;
    VineStructure best;
    bool have = false;
    for (int l = n - 1; l >= lo; --l) {
        VineStructure v = build_candidate_vine(corr, l, weights);
        if (diagnostics) diagnostics->candidate_scores.emplace_back(l, v.score);
        if (!have || v.score >= best.score) { // >= prefers the smaller l on ties
            best = std::move(v);
            have = true;
        }
    }
    return best;
}

VineStructure truncate(VineStructure v, double rho_trun) {
    if (rho_trun < 0.0 || rho_trun > 1.0)
        throw DomainError("truncate: rho_trun must lie in [0,1]");
    v.rho_trun = rho_trun;
    for (auto& t : v.trees)
        for (auto& e : t.edges) e.truncated = std::fabs(e.partial_rho) < rho_trun;
    return v;
}

// ---------------------------------------------------------------------------
// Copula assignment and evaluation.

namespace {

double clamp_unit(double x) { return std::clamp(x, 1e-12, 1.0 - 1e-12); }

// Per-edge conditional samples flowing up the vine during fitting.
struct EdgeSamples {
    std::vector<double> out_a;
    std::vector<double> out_b;
};

} // namespace

VineStructure assign_copulas(VineStructure v, const stats::PseudoObservations& pobs,
                             std::span<const CopulaFamily> candidates) {
    if (pobs.n != v.n) throw DomainError("assign_copulas: dimension mismatch");
    const int T = pobs.T;
    std::string failures;

    std::vector<EdgeSamples> below;
    for (int level = 1; level <= v.n - 1; ++level) {
        auto& tree = v.trees[level - 1];
        std::vector<EdgeSamples> current(tree.edges.size());
        for (std::size_t ei = 0; ei < tree.edges.size(); ++ei) {
            VineEdge& e = tree.edges[ei];
            std::vector<double> arg_a(T), arg_b(T);
            if (level == 1) {
                for (int t = 0; t < T; ++t) {
                    arg_a[t] = clamp_unit(pobs.at(t, e.a));
                    arg_b[t] = clamp_unit(pobs.at(t, e.b));
                }
            } else {
                const EdgeSamples& ca = below[e.child_a];
                const EdgeSamples& cb = below[e.child_b];
                const VineEdge& ea = v.trees[level - 2].edges[e.child_a];
                const VineEdge& eb = v.trees[level - 2].edges[e.child_b];
                arg_a = (ea.a == e.a) ? ca.out_a : ca.out_b;
                arg_b = (eb.a == e.b) ? cb.out_a : cb.out_b;
            }

            if (!e.truncated) {
                try {
                    auto sel = copula::select_family(arg_a, arg_b, candidates);
                    e.pair_copula = sel.copula;
                } catch (const std::exception& ex) {
                    failures += "tree " + std::to_string(level) + " edge {" + std::to_string(e.a) +
                                "," + std::to_string(e.b) + "}: " + ex.what() + "; ";
                    e.pair_copula = PairCopula{};
                }
            } else {
                e.pair_copula = PairCopula{};
            }

            if (level < v.n - 1) {
                EdgeSamples& out = current[ei];
                out.out_a.resize(T);
                out.out_b.resize(T);
                if (e.truncated || e.pair_copula.family == CopulaFamily::Independence) {
                    out.out_a = arg_a;
                    out.out_b = arg_b;
                } else {
                    for (int t = 0; t < T; ++t) {
                        out.out_a[t] = clamp_unit(copula::h_function(e.pair_copula, arg_a[t], arg_b[t]));
                        out.out_b[t] = clamp_unit(copula::h_function(e.pair_copula, arg_b[t], arg_a[t]));
                    }
                }
            }
        }
        below = std::move(current);
    }
    if (!failures.empty()) throw SelectionError("assign_copulas: " + failures);
    return v;
}

double vine_log_density(const VineStructure& v, std::span<const double> u,
                        std::uint64_t* boundary_clamps) {
    if (static_cast<int>(u.size()) != v.n) throw DomainError("vine_log_density: dimension mismatch");
    std::vector<double> point(u.begin(), u.end());
    for (double& x : point) {
        const double c = clamp_unit(x);
        if (c != x && boundary_clamps) ++*boundary_clamps;
        x = c;
    }

    double acc = 0.0;
    std::vector<std::pair<double, double>> below;
    for (int level = 1; level <= v.n - 1; ++level) {
        const auto& tree = v.trees[level - 1];
        std::vector<std::pair<double, double>> current(tree.edges.size());
        for (std::size_t ei = 0; ei < tree.edges.size(); ++ei) {
            const VineEdge& e = tree.edges[ei];
            double arg_a, arg_b;
            if (level == 1) {
                arg_a = point[e.a];
                arg_b = point[e.b];
            } else {
                const VineEdge& ea = v.trees[level - 2].edges[e.child_a];
                const VineEdge& eb = v.trees[level - 2].edges[e.child_b];
                arg_a = (ea.a == e.a) ? below[e.child_a].first : below[e.child_a].second;
                arg_b = (eb.a == e.b) ? below[e.child_b].first : below[e.child_b].second;
            }
            const bool indep = e.truncated || e.pair_copula.family == CopulaFamily::Independence;
            if (!indep) acc += copula::log_density(e.pair_copula, arg_a, arg_b);
            if (level < v.n - 1) {
                if (indep) {
                    current[ei] = {arg_a, arg_b};
                } else {
                    current[ei] = {clamp_unit(copula::h_function(e.pair_copula, arg_a, arg_b)),
                                   clamp_unit(copula::h_function(e.pair_copula, arg_b, arg_a))};
                }
            }
        }
        below = std::move(current);
    }
    return acc;
}

ad::Var vine_log_density_graph(const VineStructure& v, ad::Tape& tape,
                               std::span<const ad::Var> u, std::span<const ad::Var> edge_params) {
    if (static_cast<int>(u.size()) != v.n)
        throw DomainError("vine_log_density_graph: dimension mismatch");
    ad::Var acc = tape.constant(0.0);
    std::size_t pofs = 0;
    std::vector<std::pair<ad::Var, ad::Var>> below;
    for (int level = 1; level <= v.n - 1; ++level) {
        const auto& tree = v.trees[level - 1];
        std::vector<std::pair<ad::Var, ad::Var>> current(tree.edges.size(),
                                                         {ad::Var{}, ad::Var{}});
        for (std::size_t ei = 0; ei < tree.edges.size(); ++ei) {
            const VineEdge& e = tree.edges[ei];
            ad::Var arg_a, arg_b;
            if (level == 1) {
                arg_a = u[e.a];
                arg_b = u[e.b];
            } else {
                const VineEdge& ea = v.trees[level - 2].edges[e.child_a];
                const VineEdge& eb = v.trees[level - 2].edges[e.child_b];
                arg_a = (ea.a == e.a) ? below[e.child_a].first : below[e.child_a].second;
                arg_b = (eb.a == e.b) ? below[e.child_b].first : below[e.child_b].second;
            }
            const bool indep = e.truncated || e.pair_copula.family == CopulaFamily::Independence;
            std::span<const ad::Var> params;
            if (!e.truncated) {
                const int k = copula::param_count(e.pair_copula.family);
                params = edge_params.subspan(pofs, k);
                pofs += k;
            }
            if (!indep) acc = acc + copula::log_density_graph(e.pair_copula.family, params, arg_a, arg_b);
            if (level < v.n - 1) {
                if (indep) {
                    current[ei] = {arg_a, arg_b};
                } else {
                    current[ei] = {
                        copula::h_function_graph(e.pair_copula.family, params, arg_a, arg_b),
                        copula::h_function_graph(e.pair_copula.family, params, arg_b, arg_a)};
                }
            }
        }
        below = std::move(current);
    }
    return acc;
}

std::vector<double> collect_edge_params(const VineStructure& v) {
    std::vector<double> out;
    for (const auto& t : v.trees)
        for (const auto& e : t.edges)
            if (!e.truncated)
                out.insert(out.end(), e.pair_copula.params.begin(), e.pair_copula.params.end());
    return out;
}

void set_edge_params(VineStructure& v, std::span<const double> params) {
    std::size_t ofs = 0;
    for (auto& t : v.trees)
        for (auto& e : t.edges) {
            if (e.truncated) continue;
            for (double& p : e.pair_copula.params) {
                if (ofs >= params.size()) throw DomainError("set_edge_params: too few parameters");
                p = params[ofs++];
            }
        }
    if (ofs != params.size()) throw DomainError("set_edge_params: too many parameters");
}

// ---------------------------------------------------------------------------
// Validation and serialization.

void validate_structure(const VineStructure& v) {
    if (v.n < 2) throw StructuralError("vine: n < 2");
    if (static_cast<int>(v.trees.size()) != v.n - 1)
        throw StructuralError("vine: expected n-1 trees");

    std::vector<std::uint32_t> seen_pairs;
    for (int level = 1; level <= v.n - 1; ++level) {
        const auto& tree = v.trees[level - 1];
        if (tree.level != level) throw StructuralError("vine: tree level mislabeled");
        if (static_cast<int>(tree.edges.size()) != v.n - level)
            throw StructuralError("vine: tree " + std::to_string(level) + " must have n-j edges");

        // Tree shape over the nodes (edges of the tree below / variables).
        const int node_count = v.n - level + 1;
        std::vector<int> parent(node_count);
        for (int i = 0; i < node_count; ++i) parent[i] = i;
        std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : find(parent[x]); };

        for (const auto& e : tree.edges) {
            if (e.a < 0 || e.b <= e.a || e.b >= v.n) throw StructuralError("vine: bad conditioned pair");
            for (int c : e.conditioning)
                if (c == e.a || c == e.b) throw StructuralError("vine: conditioned var inside conditioning");
            if (static_cast<int>(e.conditioning.size()) != level - 1)
                throw StructuralError("vine: conditioning size must be level-1");
            seen_pairs.push_back(bit(e.a) | bit(e.b));

            if (e.child_a < 0 || e.child_b < 0 || e.child_a >= node_count || e.child_b >= node_count)
                throw StructuralError("vine: children out of range");
            if (level >= 2) {
                const VineEdge& ca = v.trees[level - 2].edges[e.child_a];
                const VineEdge& cb = v.trees[level - 2].edges[e.child_b];
                const std::uint32_t ua = ca.union_mask(), ub = cb.union_mask();
                // Proximity: the two nodes joined share all but one variable.
                if (__builtin_popcount(ua ^ ub) != 2)
                    throw StructuralError("vine: proximity violated");
                if ((ua | ub) != e.union_mask() || (ua & ub) != e.conditioning_mask())
                    throw StructuralError("vine: constraint sets inconsistent with m-children");
                if (!(ua & bit(e.a)) || !(ub & bit(e.b)))
                    throw StructuralError("vine: conditioned variables misplaced in m-children");
                // The m-children expose the conditioned variables for the
                // h-function recursion.
                if (ca.a != e.a && ca.b != e.a)
                    throw StructuralError("vine: child cannot supply F(a | D)");
                if (cb.a != e.b && cb.b != e.b)
                    throw StructuralError("vine: child cannot supply F(b | D)");
            }
            const int ra = find(e.child_a), rb = find(e.child_b);
            if (ra == rb) throw StructuralError("vine: cycle inside tree " + std::to_string(level));
            parent[ra] = rb;
        }
    }

    std::sort(seen_pairs.begin(), seen_pairs.end());
    if (std::adjacent_find(seen_pairs.begin(), seen_pairs.end()) != seen_pairs.end())
        throw StructuralError("vine: a conditioned pair appears on two edges");
    if (static_cast<int>(seen_pairs.size()) != v.n * (v.n - 1) / 2)
        throw StructuralError("vine: conditioned pairs do not cover all variable pairs");
}

std::string to_text(const VineStructure& v) {
    std::ostringstream os;
    os << "wpvc-vine-v1 n=" << v.n << " l=" << v.inverse_indicator << " R=" << fmt_double(v.score)
       << " rho_trun=" << fmt_double(v.rho_trun) << "\n";
    for (const auto& t : v.trees) {
        os << "tree " << t.level << "\n";
        for (const auto& e : t.edges) {
            os << "  {" << e.a << "," << e.b << "} | {";
            for (std::size_t i = 0; i < e.conditioning.size(); ++i)
                os << (i ? "," : "") << e.conditioning[i];
            os << "} : " << copula::family_name(e.pair_copula.family) << "(";
            for (std::size_t i = 0; i < e.pair_copula.params.size(); ++i)
                os << (i ? "," : "") << fmt_double(e.pair_copula.params[i]);
            os << ") : tau=" << fmt_double(e.pair_copula.fitted_tau)
               << " : rho=" << fmt_double(e.partial_rho) << " : "
               << (e.truncated ? "truncated" : "fitted") << "\n";
        }
    }
    return os.str();
}

namespace {

// Minimal tokenizer for the vine text format.
struct Cursor {
    const std::string& s;
    std::size_t pos = 0;

    void expect(const std::string& lit) {
        skip_ws();
        if (s.compare(pos, lit.size(), lit) != 0)
            throw DataError("vine file: expected '" + lit + "' near offset " + std::to_string(pos));
        pos += lit.size();
    }
    bool peek(const std::string& lit) {
        skip_ws();
        return s.compare(pos, lit.size(), lit) == 0;
    }
    void skip_ws() {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\n' || s[pos] == '\t' || s[pos] == '\r'))
            ++pos;
    }
    long read_int() {
        skip_ws();
        char* end = nullptr;
        const long x = std::strtol(s.c_str() + pos, &end, 10);
        if (end == s.c_str() + pos) throw DataError("vine file: integer expected");
        pos = end - s.c_str();
        return x;
    }
    double read_double() {
        skip_ws();
        char* end = nullptr;
        const double x = std::strtod(s.c_str() + pos, &end);
        if (end == s.c_str() + pos) throw DataError("vine file: number expected");
        pos = end - s.c_str();
        return x;
    }
    std::string read_word() {
        skip_ws();
        std::size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
            ++pos;
        return s.substr(start, pos - start);
    }
    bool done() {
        skip_ws();
        return pos >= s.size();
    }
};

} // namespace

VineStructure from_text(const std::string& text) {
    Cursor c{text};
    c.expect("wpvc-vine-v1");
    c.expect("n=");
    VineStructure v;
    v.n = static_cast<int>(c.read_int());
    c.expect("l=");
    v.inverse_indicator = static_cast<int>(c.read_int());
    c.expect("R=");
    v.score = c.read_double();
    c.expect("rho_trun=");
    v.rho_trun = c.read_double();

    while (!c.done()) {
        c.expect("tree");
        VineTree t;
        t.level = static_cast<int>(c.read_int());
        const int expected = v.n - t.level;
        for (int i = 0; i < expected; ++i) {
            VineEdge e;
            c.expect("{");
            e.a = static_cast<int>(c.read_int());
            c.expect(",");
            e.b = static_cast<int>(c.read_int());
            c.expect("}");
            c.expect("|");
            c.expect("{");
            while (!c.peek("}")) {
                e.conditioning.push_back(static_cast<int>(c.read_int()));
                if (c.peek(",")) c.expect(",");
            }
            c.expect("}");
            c.expect(":");
            e.pair_copula.family = copula::family_from_name(c.read_word());
            c.expect("(");
            while (!c.peek(")")) {
                e.pair_copula.params.push_back(c.read_double());
                if (c.peek(",")) c.expect(",");
            }
            c.expect(")");
            c.expect(":");
            c.expect("tau=");
            e.pair_copula.fitted_tau = c.read_double();
            c.expect(":");
            c.expect("rho=");
            e.partial_rho = c.read_double();
            c.expect(":");
            if (c.peek("truncated")) {
                c.expect("truncated");
                e.truncated = true;
            } else {
                c.expect("fitted");
            }
            t.edges.push_back(std::move(e));
        }
        v.trees.push_back(std::move(t));
    }
    Builder::wire_children(v);
    validate_structure(v);
    return v;
}

} // namespace wpvc::vine
