#include "ocmp/order.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>

namespace ocmp {

void ParetoPoint::validate() const {
    if (!(accuracy >= 0.0 && accuracy <= 100.0)) throw ValidationError("pareto point: accuracy must lie in [0, 100]");
    if (!(bitops_cr > 0.0)) throw ValidationError("pareto point: bitops_cr must be positive");
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
    return a.accuracy >= b.accuracy && a.bitops_cr >= b.bitops_cr &&
           (a.accuracy > b.accuracy || a.bitops_cr > b.bitops_cr);
}

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
    if (points.empty()) throw ValidationError("pareto_front: no points");
    std::vector<size_t> idx(points.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (points[a].accuracy != points[b].accuracy) return points[a].accuracy > points[b].accuracy;
        return points[a].bitops_cr > points[b].bitops_cr;
    });
    // Sweeping by accuracy, a point survives only if it beats every bitops_cr seen so far.
    std::vector<ParetoPoint> front;
    double best = -std::numeric_limits<double>::infinity();
    for (size_t i : idx) {
        if (points[i].bitops_cr > best) {
            front.push_back(points[i]);
            best = points[i].bitops_cr;
        }
    }
    return front;
}

double hypervolume(const std::vector<ParetoPoint>& points, const ReferencePoint& ref) {
    if (points.empty()) return 0.0;
    for (const auto& p : points) {
        if (p.accuracy < ref.accuracy || std::log2(p.bitops_cr) < ref.log_cr) {
            throw ValidationError("hypervolume: point " + p.config_id + " lies below the reference point");
        }
    }
    const auto front = pareto_front(points);
    double area = 0.0;
    for (size_t i = 0; i < front.size(); ++i) {
        const double next_acc = i + 1 < front.size() ? front[i + 1].accuracy : ref.accuracy;
        area += (front[i].accuracy - next_acc) * (std::log2(front[i].bitops_cr) - ref.log_cr);
    }
    return area;
}

size_t clip_to_reference(std::vector<ParetoPoint>& points, const ReferencePoint& ref) {
    const size_t before = points.size();
    std::erase_if(points, [&](const ParetoPoint& p) {
        return p.accuracy < ref.accuracy || std::log2(p.bitops_cr) < ref.log_cr;
    });
    return before - points.size();
}

std::string to_string(EdgeDecision d) {
    switch (d) {
        case EdgeDecision::XBeforeY: return "X->Y";
        case EdgeDecision::YBeforeX: return "Y->X";
        case EdgeDecision::Inconclusive: return "inconclusive";
    }
    return "?";
}

OrderComparison compare_orders(const OrderFront& xy, const OrderFront& yx, double epsilon) {
    if (!(xy.ref == yx.ref)) throw ValidationError("compare_orders: fronts use different reference points");
    if (!(epsilon >= 0.0)) throw ValidationError("compare_orders: margin must be non-negative");
    OrderComparison c;
    c.hv_xy = hypervolume(xy.points, xy.ref);
    c.hv_yx = hypervolume(yx.points, yx.ref);
    const auto ratio = [](double a, double b) {
        return b > 0.0 ? a / b - 1.0 : std::numeric_limits<double>::infinity();
    };
    if (c.hv_xy > c.hv_yx * (1.0 + epsilon)) {
        c.decision = EdgeDecision::XBeforeY;
        c.margin = ratio(c.hv_xy, c.hv_yx);
    } else if (c.hv_yx > c.hv_xy * (1.0 + epsilon)) {
        c.decision = EdgeDecision::YBeforeX;
        c.margin = ratio(c.hv_yx, c.hv_xy);
    } else if (c.hv_xy > 0.0 && c.hv_yx > 0.0) {
        c.margin = std::max(c.hv_xy, c.hv_yx) / std::min(c.hv_xy, c.hv_yx) - 1.0;
    }
    return c;
}

namespace {

std::string kind_path(const std::vector<StageKind>& ks) {
    std::string s;
    for (size_t i = 0; i < ks.size(); ++i) {
        if (i) s += "->";
        s += stage_letter(ks[i]);
    }
    return s;
}

// First cycle found by DFS, closed (first node repeated at the end); empty if acyclic.
std::vector<StageKind> find_cycle(const PrecedenceGraph& g) {
    std::map<StageKind, std::vector<StageKind>> adj;
    for (const auto& e : g.edges) adj[e.before].push_back(e.after);
    std::map<StageKind, int> state;  // 0 new, 1 on stack, 2 done
    std::vector<StageKind> stack;
    std::vector<StageKind> cycle;
    std::function<bool(StageKind)> visit = [&](StageKind u) {
        state[u] = 1;
        stack.push_back(u);
        for (StageKind v : adj[u]) {
            if (state[v] == 1) {
                auto it = std::find(stack.begin(), stack.end(), v);
                cycle.assign(it, stack.end());
                cycle.push_back(v);
                return true;
            }
            if (state[v] == 0 && visit(v)) return true;
        }
        stack.pop_back();
        state[u] = 2;
        return false;
    };
    for (StageKind n : g.nodes) {
        if (state[n] == 0 && visit(n)) return cycle;
    }
    return {};
}

}  // namespace

PrecedenceGraph build_dag(const std::vector<StageKind>& nodes, const std::vector<PrecedenceEdge>& edges) {
    std::set<StageKind> all(nodes.begin(), nodes.end());
    std::set<std::pair<StageKind, StageKind>> pairs;
    for (const auto& e : edges) {
        if (e.before == e.after) {
            throw PlanningError(std::string("self-edge on ") + stage_letter(e.before));
        }
        const auto key = std::minmax(e.before, e.after);
        if (pairs.count({e.after, e.before}) && !pairs.count({e.before, e.after})) {
            throw PlanningError(std::string("precedence cycle: ") + stage_letter(e.after) + "->" + stage_letter(e.before) +
                                "->" + stage_letter(e.after));
        }
        if (!pairs.insert({e.before, e.after}).second) {
            throw PlanningError(std::string("inconsistent input: more than one edge between ") + stage_letter(key.first) +
                                " and " + stage_letter(key.second));
        }
        all.insert(e.before);
        all.insert(e.after);
    }
    PrecedenceGraph g;
    g.nodes.assign(all.begin(), all.end());
    g.edges = edges;
    const auto cycle = find_cycle(g);
    if (!cycle.empty()) throw PlanningError("precedence cycle: " + kind_path(cycle));
    return g;
}

TopoOrder toposort(const PrecedenceGraph& g) {
    std::map<StageKind, int> indegree;
    std::map<StageKind, std::vector<StageKind>> adj;
    for (StageKind n : g.nodes) indegree[n] = 0;
    for (const auto& e : g.edges) {
        adj[e.before].push_back(e.after);
        ++indegree[e.after];
    }
    TopoOrder out;
    std::set<StageKind> ready;
    for (const auto& [n, d] : indegree) {
        if (d == 0) ready.insert(n);
    }
    while (!ready.empty()) {
        const StageKind next = *ready.begin();  // enum order is the tie-break priority
        if (ready.size() > 1) {
            out.unique = false;
            std::string line = "step " + std::to_string(out.order.size() + 1) + ": {";
            bool first = true;
            for (StageKind k : ready) {
                line += (first ? "" : ", ") + std::string(1, stage_letter(k));
                first = false;
            }
            out.ambiguities.push_back(line + "} -> " + stage_letter(next));
        }
        ready.erase(ready.begin());
        out.order.push_back(next);
        for (StageKind v : adj[next]) {
            if (--indegree[v] == 0) ready.insert(v);
        }
    }
    if (out.order.size() != indegree.size()) throw PlanningError("toposort: graph has a cycle");
    return out;
}

std::string sequence_string(const std::vector<StageKind>& order) {
    std::string s;
    for (size_t i = 0; i < order.size(); ++i) {
        if (i) s += ' ';
        s += stage_letter(order[i]);
    }
    return s;
}

}  // namespace ocmp
