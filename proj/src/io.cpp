#include "mk/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "mk/errors.hpp"

namespace mk::io {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json vec(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
    return a;
}

json vec(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(number(x));
    return a;
}

double num(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

Eigen::VectorXd to_eigen(const json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = num(j[i]);
    return v;
}

std::vector<double> to_doubles(const json& j) {
    std::vector<double> v;
    v.reserve(j.size());
    for (const auto& x : j) v.push_back(num(x));
    return v;
}

const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("missing key \"") + key + "\"");
    return j.at(key);
}

json matrix(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec(Eigen::VectorXd(m.row(i).transpose())));
    return a;
}

Eigen::MatrixXd to_matrix(const json& j) {
    if (j.empty()) return {};
    Eigen::MatrixXd m(j.size(), j[0].size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (j[i].size() != static_cast<std::size_t>(m.cols())) throw ValidationError("ragged matrix");
        for (std::size_t k = 0; k < j[i].size(); ++k) m(i, k) = num(j[i][k]);
    }
    return m;
}

json points(const std::vector<Point>& ps) {
    json a = json::array();
    for (const auto& p : ps) a.push_back(point_to_json(p));
    return a;
}

std::vector<Point> points_of(const json& j, Chart chart) {
    std::vector<Point> ps;
    for (const auto& a : j) ps.push_back(point_from_json(a, chart));
    return ps;
}

json grid_fields(const GridGeometry& g) { return geometry_to_json(g); }

json verdict_json(const Verdict& v) {
    return json{{"status", to_string(v.status)}, {"value", v.value}, {"witness", v.witness}};
}

VerdictStatus parse_status(const std::string& s) {
    if (s == "holds") return VerdictStatus::holds;
    if (s == "violated") return VerdictStatus::violated;
    if (s == "inconclusive") return VerdictStatus::inconclusive;
    throw ValidationError("unknown verdict status " + s);
}

Region parse_region(int k) {
    if (k < 0 || k > 2) throw ValidationError("region label out of range");
    return static_cast<Region>(k);
}

}  // namespace

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

std::string dump_line(const json& doc) { return doc.dump(); }

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

json point_to_json(const Point& p) { return vec(p.coords); }

Point point_from_json(const json& j, Chart chart) {
    Point p(to_eigen(j), chart);
    validate_point(p);
    return p;
}

json to_json(const DiscreteMeasure& m) {
    return json{{"chart", to_string(m.chart())}, {"atoms", points(m.atoms())}, {"weights", vec(m.weights())}};
}

DiscreteMeasure discrete_measure_from_json(const json& j) {
    const Chart chart = parse_chart(field(j, "chart").get<std::string>());
    return DiscreteMeasure(points_of(field(j, "atoms"), chart), to_doubles(field(j, "weights")));
}

std::vector<Point> points_from_json(const json& j) {
    return points_of(field(j, "atoms"), parse_chart(field(j, "chart").get<std::string>()));
}

json geometry_to_json(const GridGeometry& g) {
    json box = json::array();
    for (int a = 0; a < g.dim(); ++a) box.push_back(json::array({g.lo[a], g.hi[a]}));
    return json{{"chart", to_string(g.chart)}, {"box", box}, {"shape", g.shape}};
}

GridGeometry geometry_from_json(const json& j) {
    GridGeometry g;
    g.chart = parse_chart(field(j, "chart").get<std::string>());
    for (const auto& b : field(j, "box")) {
        if (b.size() != 2) throw ValidationError("box entries are [lo, hi] pairs");
        g.lo.push_back(b[0].get<double>());
        g.hi.push_back(b[1].get<double>());
    }
    g.shape = field(j, "shape").get<std::vector<int>>();
    if (g.shape.size() != g.lo.size()) throw ValidationError("box and shape disagree in dimension");
    g.validate();
    return g;
}

json to_json(const GridMeasure& m) {
    json j = grid_fields(m.geometry());
    j["density"] = vec(m.density());
    return j;
}

GridMeasure grid_measure_from_json(const json& j) {
    GridGeometry g = geometry_from_json(j);
    std::vector<double> d = to_doubles(field(j, "density"));
    if (d.size() != g.size()) throw ValidationError("density length does not match shape");
    return GridMeasure(std::move(g), std::move(d), j.value("normalize", false));
}

json to_json(const PotentialField& u) {
    json j = grid_fields(u.grid);
    j["values"] = vec(u.values);
    return j;
}

PotentialField potential_field_from_json(const json& j) {
    PotentialField u;
    u.grid = geometry_from_json(j);
    u.values = to_doubles(field(j, "values"));
    if (u.values.size() != u.grid.size()) throw ValidationError("values length does not match shape");
    return u;
}

json to_json(const AtomField& f) {
    const Chart chart = f.atoms.empty() ? Chart::euclidean : f.atoms.front().chart;
    return json{{"chart", to_string(chart)}, {"atoms", points(f.atoms)}, {"values", vec(f.values)}};
}

AtomField atom_field_from_json(const json& j) {
    AtomField f;
    f.atoms = points_from_json(j);
    f.values = to_eigen(field(j, "values"));
    if (static_cast<std::size_t>(f.values.size()) != f.atoms.size())
        throw ValidationError("values length does not match atoms");
    return f;
}

json to_json(const TransportSolution& s) {
    json plan = json::array();
    for (const auto& e : s.plan) plan.push_back(json::array({e.source, e.target, e.mass}));
    return json{{"plan", plan},
                {"dual_u", vec(s.dual_u)},
                {"dual_v", vec(s.dual_v)},
                {"primal_cost", s.primal_cost},
                {"dual_value", s.dual_value},
                {"gap", s.gap},
                {"dropped_sources", s.dropped_sources},
                {"dropped_targets", s.dropped_targets},
                {"cost", matrix(s.cost)},
                {"iterations", s.iterations},
                {"degenerate_pivots", s.degenerate_pivots}};
}

TransportSolution transport_solution_from_json(const json& j) {
    TransportSolution s;
    for (const auto& e : field(j, "plan")) {
        if (e.size() != 3) throw ValidationError("plan entries are [i, j, mass]");
        s.plan.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<double>()});
    }
    s.dual_u = to_eigen(field(j, "dual_u"));
    s.dual_v = to_eigen(field(j, "dual_v"));
    s.primal_cost = field(j, "primal_cost").get<double>();
    s.dual_value = field(j, "dual_value").get<double>();
    s.gap = field(j, "gap").get<double>();
    s.dropped_sources = j.value("dropped_sources", std::vector<int>{});
    s.dropped_targets = j.value("dropped_targets", std::vector<int>{});
    s.cost = to_matrix(field(j, "cost"));
    s.iterations = j.value("iterations", 0L);
    s.degenerate_pivots = j.value("degenerate_pivots", 0L);
    for (const auto& e : s.plan)
        if (e.source < 0 || e.target < 0 || e.source >= s.cost.rows() || e.target >= s.cost.cols())
            throw ValidationError("plan index outside the cost matrix");
    return s;
}

void write_plan_csv(const std::filesystem::path& path, const std::vector<PlanEntry>& plan) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    for (const auto& e : plan) out << e.source << ',' << e.target << ',' << format_double(e.mass) << '\n';
}

std::vector<PlanEntry> read_plan_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::vector<PlanEntry> plan;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        PlanEntry e{};
        char c1 = 0, c2 = 0;
        std::istringstream ss(line);
        if (!(ss >> e.source >> c1 >> e.target >> c2 >> e.mass) || c1 != ',' || c2 != ',')
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected i,j,mass");
        plan.push_back(e);
    }
    return plan;
}

json to_json(const MapTable& m) {
    json rows = json::array();
    for (const auto& r : m.rows)
        rows.push_back(json{{"source", r.source},
                            {"target", r.target},
                            {"mass", r.mass},
                            {"fraction", r.fraction},
                            {"split", r.split}});
    return json{{"rows", rows}, {"split_rows", m.split_rows}, {"monge", m.is_monge()}};
}

MapTable map_table_from_json(const json& j) {
    MapTable m;
    for (const auto& r : field(j, "rows"))
        m.rows.push_back({r.at("source").get<int>(), r.at("target").get<int>(), r.at("mass").get<double>(),
                          r.at("fraction").get<double>(), r.at("split").get<bool>()});
    m.split_rows = field(j, "split_rows").get<std::vector<int>>();
    return m;
}

json to_json(const ResidualField& r) {
    json j = grid_fields(r.grid);
    j["values"] = vec(r.values);
    json mask = json::array();
    for (char c : r.masked) mask.push_back(c ? 1 : 0);
    j["masked"] = mask;
    j["evaluated"] = r.evaluated;
    j["masked_count"] = r.masked_count;
    j["median_abs"] = r.median_abs;
    j["max_abs"] = r.max_abs;
    return j;
}

ResidualField residual_from_json(const json& j) {
    ResidualField r;
    r.grid = geometry_from_json(j);
    r.values = to_doubles(field(j, "values"));
    for (const auto& m : field(j, "masked")) r.masked.push_back(m.get<int>() ? 1 : 0);
    if (r.values.size() != r.grid.size() || r.masked.size() != r.grid.size())
        throw ValidationError("residual arrays do not match shape");
    r.evaluated = field(j, "evaluated").get<std::size_t>();
    r.masked_count = field(j, "masked_count").get<std::size_t>();
    r.median_abs = num(field(j, "median_abs"));
    r.max_abs = num(field(j, "max_abs"));
    return r;
}

json to_json(const CrossCurvatureReport& r) {
    const Chart chart = r.samples.empty() ? Chart::euclidean : r.samples.front().x.chart;
    json verdicts = json::object();
    for (const auto& [k, v] : r.verdicts) verdicts[k] = verdict_json(v);
    json samples = json::array();
    for (const auto& s : r.samples)
        samples.push_back(json{{"x", point_to_json(s.x)},
                               {"y", point_to_json(s.y)},
                               {"p", vec(s.p)},
                               {"q", vec(s.q)},
                               {"cross", s.cross},
                               {"orthogonality_defect", s.orthogonality_defect},
                               {"det", s.det},
                               {"orthogonal", s.orthogonal},
                               {"degenerate", s.degenerate}});
    return json{{"cost", r.cost},
                {"chart", to_string(chart)},
                {"seed", r.seed},
                {"margin", r.margin},
                {"tol", r.tol},
                {"verdicts", verdicts},
                {"min_orthogonal", r.min_orthogonal},
                {"max_orthogonal", r.max_orthogonal},
                {"min_general", r.min_general},
                {"max_general", r.max_general},
                {"degenerate", r.degenerate},
                {"samples", samples}};
}

CrossCurvatureReport curvature_report_from_json(const json& j) {
    CrossCurvatureReport r;
    r.cost = field(j, "cost").get<std::string>();
    const Chart chart = parse_chart(field(j, "chart").get<std::string>());
    r.seed = field(j, "seed").get<std::uint64_t>();
    r.margin = field(j, "margin").get<double>();
    r.tol = field(j, "tol").get<double>();
    for (const auto& [k, v] : field(j, "verdicts").items())
        r.verdicts[k] = Verdict{parse_status(v.at("status").get<std::string>()), num(v.at("value")),
                                v.at("witness").get<int>()};
    r.min_orthogonal = num(field(j, "min_orthogonal"));
    r.max_orthogonal = num(field(j, "max_orthogonal"));
    r.min_general = num(field(j, "min_general"));
    r.max_general = num(field(j, "max_general"));
    r.degenerate = field(j, "degenerate").get<int>();
    for (const auto& s : field(j, "samples")) {
        CrossSample c;
        c.x = Point(to_eigen(s.at("x")), chart);
        c.y = Point(to_eigen(s.at("y")), chart);
        c.p = to_eigen(s.at("p"));
        c.q = to_eigen(s.at("q"));
        c.cross = num(s.at("cross"));
        c.orthogonality_defect = num(s.at("orthogonality_defect"));
        c.det = num(s.at("det"));
        c.orthogonal = s.at("orthogonal").get<bool>();
        c.degenerate = s.at("degenerate").get<bool>();
        r.samples.push_back(std::move(c));
    }
    return r;
}

json to_json(const CSegment& s) {
    json ys = json::array();
    for (const auto& p : s.y) ys.push_back(point_to_json(p));
    return json{{"chart", to_string(s.x0.chart)},
                {"x0", point_to_json(s.x0)},
                {"y0", point_to_json(s.y0)},
                {"y1", point_to_json(s.y1)},
                {"t", vec(s.t)},
                {"y", ys},
                {"residual", vec(s.residual)},
                {"max_residual", s.max_residual}};
}

CSegment c_segment_from_json(const json& j) {
    CSegment s;
    const Chart chart = parse_chart(field(j, "chart").get<std::string>());
    s.x0 = point_from_json(field(j, "x0"), chart);
    s.y0 = point_from_json(field(j, "y0"), chart);
    s.y1 = point_from_json(field(j, "y1"), chart);
    s.t = to_doubles(field(j, "t"));
    s.y = points_of(field(j, "y"), chart);
    s.residual = to_doubles(field(j, "residual"));
    s.max_residual = num(field(j, "max_residual"));
    if (s.y.size() != s.t.size() || s.residual.size() != s.t.size())
        throw ValidationError("c-segment arrays differ in length");
    return s;
}

json to_json(const MaxPrincipleReport& r) {
    return json{{"points", r.points},
                {"t_samples", r.t_samples},
                {"max_defect", r.max_defect},
                {"witness_x", r.witness_x},
                {"witness_t", r.witness_t},
                {"convexity_defect", r.convexity_defect},
                {"convexity_witness", r.convexity_witness},
                {"passed", r.passed}};
}

MaxPrincipleReport max_principle_from_json(const json& j) {
    MaxPrincipleReport r;
    r.points = field(j, "points").get<int>();
    r.t_samples = field(j, "t_samples").get<int>();
    r.max_defect = num(field(j, "max_defect"));
    r.witness_x = field(j, "witness_x").get<int>();
    r.witness_t = num(field(j, "witness_t"));
    r.convexity_defect = num(field(j, "convexity_defect"));
    r.convexity_witness = field(j, "convexity_witness").get<int>();
    r.passed = field(j, "passed").get<bool>();
    return r;
}

json to_json(const IsoperimetricReport& r) {
    return json{{"area", r.area},
                {"scale", r.scale},
                {"lhs", r.lhs},
                {"flux", r.flux},
                {"perimeter", r.perimeter},
                {"ratio", r.ratio},
                {"perimeter_ratio", r.perimeter_ratio},
                {"max_mass_error", r.max_mass_error},
                {"targets", r.targets},
                {"chain_holds", r.chain_holds}};
}

IsoperimetricReport isoperimetric_from_json(const json& j) {
    IsoperimetricReport r;
    r.area = num(field(j, "area"));
    r.scale = num(field(j, "scale"));
    r.lhs = num(field(j, "lhs"));
    r.flux = num(field(j, "flux"));
    r.perimeter = num(field(j, "perimeter"));
    r.ratio = num(field(j, "ratio"));
    r.perimeter_ratio = num(field(j, "perimeter_ratio"));
    r.max_mass_error = num(field(j, "max_mass_error"));
    r.targets = field(j, "targets").get<int>();
    r.chain_holds = field(j, "chain_holds").get<bool>();
    return r;
}

json to_json(const SemiDiscreteSolution& s) {
    return json{{"cost", s.cost.spec()},
                {"source", to_json(s.source)},
                {"targets", to_json(s.targets)},
                {"weights", vec(s.weights)},
                {"labels", s.labels},
                {"ties", s.ties},
                {"tie_fraction", s.tie_fraction},
                {"tie_warning", s.tie_warning},
                {"cell_masses", vec(s.cell_masses)},
                {"mass_errors", vec(s.mass_errors)},
                {"max_mass_error", s.max_mass_error},
                {"transport_cost", s.transport_cost},
                {"dual_value", s.dual_value},
                {"iterations", s.iterations},
                {"dual_trace", vec(s.dual_trace)},
                {"error_trace", vec(s.error_trace)}};
}

SemiDiscreteSolution semidiscrete_from_json(const json& j) {
    SemiDiscreteSolution s;
    s.cost = CostFunction::parse(field(j, "cost").get<std::string>());
    s.source = grid_measure_from_json(field(j, "source"));
    s.targets = discrete_measure_from_json(field(j, "targets"));
    s.weights = to_eigen(field(j, "weights"));
    s.labels = field(j, "labels").get<std::vector<int>>();
    s.ties = field(j, "ties").get<std::size_t>();
    s.tie_fraction = num(field(j, "tie_fraction"));
    s.tie_warning = field(j, "tie_warning").get<bool>();
    s.cell_masses = to_eigen(field(j, "cell_masses"));
    s.mass_errors = to_eigen(field(j, "mass_errors"));
    s.max_mass_error = num(field(j, "max_mass_error"));
    s.transport_cost = num(field(j, "transport_cost"));
    s.dual_value = num(field(j, "dual_value"));
    s.iterations = field(j, "iterations").get<int>();
    s.dual_trace = to_doubles(field(j, "dual_trace"));
    s.error_trace = to_doubles(field(j, "error_trace"));
    if (s.labels.size() != s.source.size()) throw ValidationError("labels do not match the source grid");
    if (static_cast<std::size_t>(s.weights.size()) != s.targets.size())
        throw ValidationError("weights do not match the targets");
    return s;
}

json to_json(const ComponentReport& r) {
    return json{{"target", r.target}, {"count", r.count}, {"masses", vec(r.masses)}, {"sizes", r.sizes}};
}

ComponentReport component_report_from_json(const json& j) {
    ComponentReport r;
    r.target = field(j, "target").get<int>();
    r.count = field(j, "count").get<int>();
    r.masses = to_doubles(field(j, "masses"));
    r.sizes = field(j, "sizes").get<std::vector<std::size_t>>();
    return r;
}

json to_json(const ConvexityReport& r) {
    return json{{"target", r.target}, {"pairs", r.pairs}, {"failures", r.failures}, {"convex", r.convex}};
}

ConvexityReport convexity_report_from_json(const json& j) {
    ConvexityReport r;
    r.target = field(j, "target").get<int>();
    r.pairs = field(j, "pairs").get<int>();
    r.failures = field(j, "failures").get<int>();
    r.convex = field(j, "convex").get<bool>();
    return r;
}

LoeperReport loeper_report(const LoeperScenario& s) {
    LoeperReport r;
    r.geometry = to_string(s.geometry);
    r.ball_radius = s.ball_radius;
    r.spacing = s.spacing;
    r.resolution = s.resolution;
    r.weights = s.solution.weights;
    r.masses = s.solution.cell_masses;
    r.max_mass_error = s.solution.max_mass_error;
    r.iterations = s.solution.iterations;
    r.components = s.components;
    r.convexity = s.convexity;
    return r;
}

json to_json(const LoeperReport& r) {
    json comps = json::array(), convex = json::array(), scan = json::array();
    for (const auto& c : r.components) comps.push_back(to_json(c));
    for (const auto& c : r.convexity) convex.push_back(to_json(c));
    for (const auto& e : r.scan)
        scan.push_back(json{{"ball_radius", e.ball_radius},
                            {"spacing", e.spacing},
                            {"middle_components", e.middle_components}});
    return json{{"geometry", r.geometry},
                {"ball_radius", r.ball_radius},
                {"spacing", r.spacing},
                {"resolution", r.resolution},
                {"weights", vec(r.weights)},
                {"masses", vec(r.masses)},
                {"max_mass_error", r.max_mass_error},
                {"iterations", r.iterations},
                {"components", comps},
                {"convexity", convex},
                {"scan", scan},
                {"first_disconnecting", r.first_disconnecting}};
}

LoeperReport loeper_report_from_json(const json& j) {
    LoeperReport r;
    r.geometry = to_string(parse_loeper_geometry(field(j, "geometry").get<std::string>()));
    r.ball_radius = field(j, "ball_radius").get<double>();
    r.spacing = field(j, "spacing").get<double>();
    r.resolution = field(j, "resolution").get<int>();
    r.weights = to_eigen(field(j, "weights"));
    r.masses = to_eigen(field(j, "masses"));
    r.max_mass_error = num(field(j, "max_mass_error"));
    r.iterations = field(j, "iterations").get<int>();
    for (const auto& c : field(j, "components")) r.components.push_back(component_report_from_json(c));
    for (const auto& c : field(j, "convexity")) r.convexity.push_back(convexity_report_from_json(c));
    for (const auto& e : field(j, "scan"))
        r.scan.push_back({e.at("ball_radius").get<double>(), e.at("spacing").get<double>(),
                          e.at("middle_components").get<int>()});
    r.first_disconnecting = field(j, "first_disconnecting").get<int>();
    return r;
}

json to_json(const ScreeningSolution& s) {
    json ys = json::array();
    for (const auto& y : s.y) ys.push_back(vec(y));
    json labels = json::array();
    for (Region r : s.labels) labels.push_back(static_cast<int>(r));
    json boundary = json::array();
    for (bool b : s.boundary) boundary.push_back(b ? 1 : 0);
    return json{{"u", to_json(s.u)},
                {"reservation", vec(s.reservation)},
                {"y", ys},
                {"node_mass", vec(s.node_mass)},
                {"labels", labels},
                {"label_names", json::array({"exclusion", "bunching", "full_rank"})},
                {"boundary", boundary},
                {"strata", json{{"exclusion", s.f0}, {"bunching", s.f1}, {"full_rank", s.f2}}},
                {"eps_u", s.eps_u},
                {"eps_rank", s.eps_rank},
                {"hessian_step", s.hessian_step},
                {"diagonal_fraction", s.diagonal_fraction},
                {"energy", s.energy},
                {"objective", s.objective},
                {"welfare", s.welfare},
                {"min_convexity", s.min_convexity},
                {"min_slack", s.min_slack},
                {"active_constraints", s.active_constraints},
                {"kkt_worst", s.kkt_worst},
                {"gap_bound", s.gap_bound},
                {"energy_trace", vec(s.energy_trace)},
                {"iterations", s.iterations},
                {"newton_steps", s.newton_steps},
                {"unbounded", s.unbounded},
                {"seed", s.seed}};
}

ScreeningSolution screening_solution_from_json(const json& j) {
    ScreeningSolution s;
    s.u = potential_field_from_json(field(j, "u"));
    s.reservation = to_doubles(field(j, "reservation"));
    for (const auto& y : field(j, "y")) s.y.push_back(to_eigen(y));
    s.node_mass = to_doubles(field(j, "node_mass"));
    for (const auto& l : field(j, "labels")) s.labels.push_back(parse_region(l.get<int>()));
    for (const auto& b : field(j, "boundary")) s.boundary.push_back(b.get<int>() != 0);
    const json& strata = field(j, "strata");
    s.f0 = num(field(strata, "exclusion"));
    s.f1 = num(field(strata, "bunching"));
    s.f2 = num(field(strata, "full_rank"));
    s.eps_u = num(field(j, "eps_u"));
    s.eps_rank = num(field(j, "eps_rank"));
    s.hessian_step = field(j, "hessian_step").get<int>();
    s.diagonal_fraction = num(field(j, "diagonal_fraction"));
    s.energy = num(field(j, "energy"));
    s.objective = num(field(j, "objective"));
    s.welfare = num(field(j, "welfare"));
    s.min_convexity = num(field(j, "min_convexity"));
    s.min_slack = num(field(j, "min_slack"));
    s.active_constraints = field(j, "active_constraints").get<int>();
    s.kkt_worst = num(field(j, "kkt_worst"));
    s.gap_bound = num(field(j, "gap_bound"));
    s.energy_trace = to_doubles(field(j, "energy_trace"));
    s.iterations = field(j, "iterations").get<int>();
    s.newton_steps = field(j, "newton_steps").get<int>();
    s.unbounded = field(j, "unbounded").get<bool>();
    s.seed = field(j, "seed").get<std::uint64_t>();
    const std::size_t n = s.u.values.size();
    if (s.reservation.size() != n || s.y.size() != n || s.node_mass.size() != n ||
        (!s.labels.empty() && s.labels.size() != n))
        throw ValidationError("screening arrays do not match the grid");
    return s;
}

void write_pgm(const std::filesystem::path& path, const Raster& r) {
    if (static_cast<std::size_t>(r.rows) * r.cols != r.pixels.size())
        throw ValidationError("raster size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "P2\n" << r.cols << ' ' << r.rows << '\n' << r.maxval << '\n';
    for (int i = 0; i < r.rows; ++i) {
        for (int k = 0; k < r.cols; ++k) {
            if (k) out << ' ';
            out << r.pixels[static_cast<std::size_t>(i) * r.cols + k];
        }
        out << '\n';
    }
}

Raster read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::string text, line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        text += line + '\n';
    }
    std::istringstream ss(text);
    std::string magic;
    Raster r;
    if (!(ss >> magic >> r.cols >> r.rows >> r.maxval) || magic != "P2" || r.cols <= 0 || r.rows <= 0 ||
        r.maxval <= 0 || r.maxval > 65535)
        throw ValidationError(path.string() + ": not a plain PGM (P2) file");
    r.pixels.resize(static_cast<std::size_t>(r.rows) * r.cols);
    for (auto& p : r.pixels)
        if (!(ss >> p) || p < 0 || p > r.maxval) throw ValidationError(path.string() + ": bad pixel data");
    return r;
}

Raster encode_affine(const std::vector<double>& values, int rows, int cols, AffineEncoding& enc) {
    if (static_cast<std::size_t>(rows) * cols != values.size()) throw ValidationError("raster size mismatch");
    enc = AffineEncoding{};
    bool any = false;
    for (double v : values) {
        if (!std::isfinite(v)) {
            enc.has_missing = true;
            continue;
        }
        if (!any) enc.lo = enc.hi = v;
        enc.lo = std::min(enc.lo, v);
        enc.hi = std::max(enc.hi, v);
        any = true;
    }
    const int first = enc.has_missing ? 1 : 0, span = 255 - first;
    Raster r{rows, cols, 255, {}};
    r.pixels.reserve(values.size());
    for (double v : values) {
        if (!std::isfinite(v)) {
            r.pixels.push_back(enc.missing_level);
            continue;
        }
        const double s = enc.hi > enc.lo ? (v - enc.lo) / (enc.hi - enc.lo) : 0.0;
        r.pixels.push_back(first + static_cast<int>(std::lround(s * span)));
    }
    return r;
}

std::vector<double> decode_affine(const Raster& r, const AffineEncoding& enc) {
    const int first = enc.has_missing ? 1 : 0, span = 255 - first;
    std::vector<double> v;
    v.reserve(r.pixels.size());
    for (int p : r.pixels) {
        if (enc.has_missing && p == enc.missing_level)
            v.push_back(kNaN);
        else
            v.push_back(enc.lo + (enc.hi - enc.lo) * double(p - first) / span);
    }
    return v;
}

json to_json(const AffineEncoding& e) {
    const int first = e.has_missing ? 1 : 0;
    return json{{"encoding", "affine"},
                {"lo", e.lo},
                {"hi", e.hi},
                {"first_level", first},
                {"last_level", 255},
                {"missing_level", e.has_missing ? json(e.missing_level) : json(nullptr)}};
}

AffineEncoding affine_encoding_from_json(const json& j) {
    if (field(j, "encoding").get<std::string>() != "affine") throw ValidationError("not an affine sidecar");
    AffineEncoding e;
    e.lo = field(j, "lo").get<double>();
    e.hi = field(j, "hi").get<double>();
    const json& m = field(j, "missing_level");
    e.has_missing = !m.is_null();
    if (e.has_missing) e.missing_level = m.get<int>();
    return e;
}

Raster encode_labels(const std::vector<int>& labels, int rows, int cols, int first_label) {
    if (static_cast<std::size_t>(rows) * cols != labels.size()) throw ValidationError("raster size mismatch");
    Raster r{rows, cols, 0, {}};
    r.pixels.reserve(labels.size());
    for (int l : labels) {
        const int level = l - first_label;
        if (level < 0 || level > 65535) throw ValidationError("label outside the palette range");
        r.pixels.push_back(level);
        r.maxval = std::max(r.maxval, level);
    }
    r.maxval = std::max(r.maxval, 1);
    return r;
}

json palette_json(const std::map<int, std::string>& palette) {
    json p = json::array();
    for (const auto& [level, name] : palette) p.push_back(json{{"level", level}, {"name", name}});
    return json{{"encoding", "index"}, {"palette", p}};
}

std::filesystem::path sidecar_path(const std::filesystem::path& pgm) {
    return std::filesystem::path(pgm.string() + ".json");
}

}  // namespace mk::io
