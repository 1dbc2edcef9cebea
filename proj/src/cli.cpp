#include "mk/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "mk/cconvex.hpp"
#include "mk/errors.hpp"
#include "mk/io.hpp"
#include "mk/kantorovich.hpp"
#include "mk/mtw.hpp"
#include "mk/parallel.hpp"
#include "mk/screening.hpp"
#include "mk/semidiscrete.hpp"

namespace mk::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

struct Params {
    std::string mu, nu, field, targets, solution, u, f_plus, f_minus, source, input;
    std::string cost = "quadratic";
    std::string direction = "x_to_y";
    std::string out, plan_csv, csv, pgm, out_dir;
    std::string shape = "disk";
    std::string geometry = "hyperbolic";
    std::string welfare = "linear";
    std::string x0, y0, y1, box = "-0.4,0.4";
    double p = 2.0;
    double threshold = 1e-6;
    double tol = 1e-9;
    double mass_tol = 1e-6;
    double margin = 1e-4;
    double kappa = 0.0;
    double lambda = 1.0;
    std::optional<double> radius, spacing;
    int resolution = 0;
    int samples = 0;
    int dim = 2;
    int cycle_k = 0;
    int max_iter = 200;
    bool serial = false;
    bool one_dimensional = false;
    std::uint64_t seed = 1;
};

struct Context {
    Params prm;
    std::vector<std::string> outputs;
    std::string command;
};

using Handler = std::function<json(Context&)>;

std::vector<double> parse_list(const std::string& s, const char* what) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw ValidationError(std::string(what) + ": expected comma-separated numbers, got \"" + s + "\"");
        }
    }
    if (v.empty()) throw ValidationError(std::string(what) + " is required");
    return v;
}

Chart chart_of(const CostFunction& c) {
    for (Chart ch : {Chart::euclidean, Chart::sphere_embedded, Chart::poincare_disk})
        if (c.accepts(ch)) return ch;
    return Chart::euclidean;
}

/// Sphere points may be given in gnomonic coordinates about the north pole.
Point parse_point(const std::string& s, const CostFunction& c, int dim, const char* what) {
    std::vector<double> v = parse_list(s, what);
    const Chart chart = chart_of(c);
    Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(v.data(), v.size());
    if (chart == Chart::sphere_embedded && x.size() == dim) {
        Eigen::VectorXd e(dim + 1);
        e.head(dim) = x;
        e[dim] = 1.0;
        x = e / e.norm();
    }
    Point p(x, chart);
    validate_point(p);
    return p;
}

fs::path output_path(const Context& ctx, const std::string& name) {
    fs::path p(name);
    if (!ctx.prm.out_dir.empty() && p.is_relative()) p = fs::path(ctx.prm.out_dir) / p;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
}

json stamp(const Context& ctx, json parameters, const json& body) {
    json doc{{"command", ctx.command}, {"seed", ctx.prm.seed}, {"parameters", std::move(parameters)}};
    for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = it.value();
    return doc;
}

void emit_json(Context& ctx, const std::string& name, const json& doc) {
    if (name.empty()) return;
    fs::path p = output_path(ctx, name);
    io::write_json(p, doc);
    ctx.outputs.push_back(p.string());
}

void emit_pgm(Context& ctx, const std::string& name, const io::Raster& r, json sidecar) {
    if (name.empty()) return;
    fs::path p = output_path(ctx, name);
    io::write_pgm(p, r);
    sidecar["command"] = ctx.command;
    sidecar["seed"] = ctx.prm.seed;
    sidecar["rows"] = r.rows;
    sidecar["cols"] = r.cols;
    sidecar["maxval"] = r.maxval;
    io::write_json(io::sidecar_path(p), sidecar);
    ctx.outputs.push_back(p.string());
    ctx.outputs.push_back(io::sidecar_path(p).string());
}

void require_2d(const GridGeometry& g, const char* what) {
    if (g.dim() != 2) throw ValidationError(std::string(what) + ": rasters need a 2-D grid");
}

DiscreteMeasure as_measure(const std::vector<Point>& atoms) { return DiscreteMeasure::uniform(atoms); }

json cmd_transport(Context& ctx) {
    const auto& p = ctx.prm;
    const auto mu = io::discrete_measure_from_json(io::read_json(p.mu));
    const auto nu = io::discrete_measure_from_json(io::read_json(p.nu));
    const auto c = CostFunction::parse(p.cost);
    const auto sol = solve_plan(mu, nu, c);
    json summary{{"primal_cost", sol.primal_cost},
                 {"dual_value", sol.dual_value},
                 {"relative_gap", sol.relative_gap()},
                 {"slackness_defect", sol.slackness_defect()},
                 {"support", sol.plan.size()}};
    json body = io::to_json(sol);
    if (p.cycle_k >= 2) {
        CycleOptions co;
        co.k_max = p.cycle_k;
        co.seed = p.seed;
        const auto rep = check_cyclical_monotonicity(sol, co);
        json cyc{{"k_max", co.k_max},
                 {"subsets_checked", rep.subsets_checked},
                 {"cycles_checked", rep.cycles_checked},
                 {"violations", rep.violations},
                 {"worst_violation", rep.worst_violation},
                 {"passed", rep.passed}};
        body["cycles"] = cyc;
        summary["cycle_violations"] = rep.violations;
    }
    emit_json(ctx, p.out, stamp(ctx, json{{"mu", p.mu}, {"nu", p.nu}, {"cost", c.spec()}}, body));
    if (!p.plan_csv.empty()) {
        fs::path path = output_path(ctx, p.plan_csv);
        io::write_plan_csv(path, sol.plan);
        ctx.outputs.push_back(path.string());
    }
    return summary;
}

json cmd_wasserstein(Context& ctx) {
    const auto& p = ctx.prm;
    const auto mu = io::discrete_measure_from_json(io::read_json(p.mu));
    const auto nu = io::discrete_measure_from_json(io::read_json(p.nu));
    const double d = wasserstein_p(mu, nu, p.p);
    json summary{{"d_p", d}, {"p", p.p}};
    emit_json(ctx, p.out, stamp(ctx, json{{"mu", p.mu}, {"nu", p.nu}, {"p", p.p}}, summary));
    return summary;
}

json cmd_ctransform(Context& ctx) {
    const auto& p = ctx.prm;
    const auto f = io::atom_field_from_json(io::read_json(p.field));
    const auto ys = io::points_from_json(io::read_json(p.targets));
    const auto c = CostFunction::parse(p.cost);
    TransformDirection dir;
    if (p.direction == "x_to_y")
        dir = TransformDirection::x_to_y;
    else if (p.direction == "y_to_x")
        dir = TransformDirection::y_to_x;
    else
        throw ValidationError("direction must be x_to_y or y_to_x");
    // rows index the x atoms whichever side the field lives on
    const bool field_is_x = dir == TransformDirection::x_to_y;
    const auto& xs = field_is_x ? f.atoms : ys;
    const auto& yt = field_is_x ? ys : f.atoms;
    const Eigen::MatrixXd m = cost_matrix(as_measure(xs), as_measure(yt), c);
    const TransformDirection back = field_is_x ? TransformDirection::y_to_x : TransformDirection::x_to_y;
    const AtomField g{ys, c_transform(m, f.values, dir)};
    const Eigen::VectorXd again = c_transform(m, c_transform(m, g.values, back), dir);
    const double defect = (again - g.values).cwiseAbs().maxCoeff();
    json summary{{"atoms", g.atoms.size()}, {"idempotence_defect", defect}};
    json body = io::to_json(g);
    body["idempotence_defect"] = defect;
    emit_json(ctx, p.out,
              stamp(ctx, json{{"field", p.field}, {"targets", p.targets}, {"cost", c.spec()}, {"direction", p.direction}},
                    body));
    return summary;
}

json cmd_map(Context& ctx) {
    const auto& p = ctx.prm;
    const auto sol = io::transport_solution_from_json(io::read_json(p.solution));
    const MapTable m = extract_map(sol, p.threshold);
    json summary{{"rows", m.rows.size()}, {"split_rows", m.split_rows.size()}, {"monge", m.is_monge()}};
    emit_json(ctx, p.out, stamp(ctx, json{{"solution", p.solution}, {"threshold", p.threshold}}, io::to_json(m)));
    if (!p.csv.empty()) {
        fs::path path = output_path(ctx, p.csv);
        std::ofstream out(path, std::ios::binary);
        for (const auto& r : m.rows)
            out << r.source << ',' << r.target << ',' << io::format_double(r.mass) << ','
                << io::format_double(r.fraction) << ',' << (r.split ? 1 : 0) << '\n';
        ctx.outputs.push_back(path.string());
    }
    return summary;
}

json cmd_residual(Context& ctx) {
    const auto& p = ctx.prm;
    const auto u = io::potential_field_from_json(io::read_json(p.u));
    const auto fp = io::grid_measure_from_json(io::read_json(p.f_plus));
    const auto fm = io::grid_measure_from_json(io::read_json(p.f_minus));
    const auto c = CostFunction::parse(p.cost);
    const ResidualField r = monge_ampere_residual(u, c, fp, fm);
    json summary{{"median_abs", r.median_abs},
                 {"max_abs", r.max_abs},
                 {"evaluated", r.evaluated},
                 {"masked", r.masked_count}};
    emit_json(ctx, p.out,
              stamp(ctx, json{{"u", p.u}, {"f_plus", p.f_plus}, {"f_minus", p.f_minus}, {"cost", c.spec()}},
                    io::to_json(r)));
    if (!p.pgm.empty()) {
        require_2d(r.grid, "residual");
        io::AffineEncoding enc;
        const auto raster = io::encode_affine(r.values, r.grid.shape[0], r.grid.shape[1], enc);
        emit_pgm(ctx, p.pgm, raster, io::to_json(enc));
    }
    return summary;
}

GridMeasure shape_raster(const std::string& shape, int n) {
    double half = 0.0;
    std::function<bool(double, double)> inside;
    if (shape == "disk") {
        half = 1.1;
        inside = [](double x, double y) { return x * x + y * y < 1.0; };
    } else if (shape == "square") {
        const double a = std::sqrt(std::numbers::pi) / 2.0;
        half = 1.3;
        inside = [a](double x, double y) { return std::fabs(x) < a && std::fabs(y) < a; };
    } else {
        throw ValidationError("shape must be disk, square or file");
    }
    GridGeometry g{Chart::euclidean, {-half, -half}, {half, half}, {n, n}};
    std::vector<double> d(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) {
        auto x = g.center(k);
        if (inside(x[0], x[1])) d[k] = 1.0;
    }
    return GridMeasure(g, d, true);
}

json cmd_isoperimetric(Context& ctx) {
    const auto& p = ctx.prm;
    IsoperimetricOptions opt;
    opt.resolution = p.resolution > 0 ? p.resolution : 256;
    GridMeasure shape;
    if (p.shape == "file") {
        if (p.input.empty()) throw ValidationError("--input is required with --shape file");
        shape = io::grid_measure_from_json(io::read_json(p.input));
    } else {
        shape = shape_raster(p.shape, opt.resolution);
    }
    const auto r = isoperimetric_check(shape, opt);
    json summary{{"ratio", r.ratio},
                 {"perimeter_ratio", r.perimeter_ratio},
                 {"flux", r.flux},
                 {"perimeter", r.perimeter},
                 {"chain_holds", r.chain_holds}};
    emit_json(ctx, p.out,
              stamp(ctx, json{{"shape", p.shape}, {"input", p.input}, {"resolution", opt.resolution}},
                    io::to_json(r)));
    return summary;
}

json cmd_curvature(Context& ctx) {
    const auto& p = ctx.prm;
    const auto c = CostFunction::parse(p.cost);
    DomainSampler sampler = DomainSampler::for_cost(c, p.dim);
    if (p.radius) sampler.radius = *p.radius;
    CertifyOptions opt;
    opt.samples = p.samples > 0 ? p.samples : 1000;
    opt.margin = p.margin;
    opt.tol = p.tol;
    opt.seed = p.seed;
    opt.parallel = !p.serial;
    const auto r = certify_conditions(c, sampler, opt);
    json verdicts = json::object();
    for (const auto& [k, v] : r.verdicts) verdicts[k] = to_string(v.status);
    json summary{{"verdicts", verdicts},
                 {"min_orthogonal", r.min_orthogonal},
                 {"min_general", r.min_general},
                 {"degenerate", r.degenerate}};
    emit_json(ctx, p.out,
              stamp(ctx,
                    json{{"cost", c.spec()},
                         {"samples", opt.samples},
                         {"dim", sampler.dim},
                         {"radius", sampler.radius},
                         {"margin", opt.margin},
                         {"tol", opt.tol}},
                    io::to_json(r)));
    return summary;
}

json segment_parameters(const Params& p, const CostFunction& c) {
    return json{{"cost", c.spec()}, {"x0", p.x0}, {"y0", p.y0}, {"y1", p.y1}};
}

CSegment segment_from(const Params& p, const CostFunction& c) {
    const Point x0 = parse_point(p.x0, c, p.dim, "--x0");
    const Point y0 = parse_point(p.y0, c, p.dim, "--y0");
    const Point y1 = parse_point(p.y1, c, p.dim, "--y1");
    return trace_c_segment(c, x0, y0, y1, p.samples > 0 ? p.samples : 33);
}

json cmd_csegment(Context& ctx) {
    const auto& p = ctx.prm;
    const auto c = CostFunction::parse(p.cost);
    const CSegment s = segment_from(p, c);
    json summary{{"points", s.t.size()}, {"max_residual", s.max_residual}};
    json params = segment_parameters(p, c);
    params["samples"] = s.t.size();
    emit_json(ctx, p.out, stamp(ctx, params, io::to_json(s)));
    return summary;
}

json cmd_maxprinciple(Context& ctx) {
    const auto& p = ctx.prm;
    const auto c = CostFunction::parse(p.cost);
    const CSegment s = segment_from(p, c);
    const std::vector<double> box = parse_list(p.box, "--box");
    if (box.size() != 2 || !(box[0] < box[1])) throw ValidationError("--box expects lo,hi with lo < hi");
    const int n = p.resolution > 0 ? p.resolution : 24;
    GridGeometry g{chart_of(c), std::vector<double>(p.dim, box[0]), std::vector<double>(p.dim, box[1]),
                   std::vector<int>(p.dim, n)};
    const auto r = loeper_max_principle_check(c, s, g);
    json summary{{"max_defect", r.max_defect}, {"witness_x", r.witness_x}, {"passed", r.passed}};
    json params = segment_parameters(p, c);
    params["samples"] = s.t.size();
    params["grid"] = io::geometry_to_json(g);
    json body = io::to_json(r);
    body["segment"] = io::to_json(s);
    emit_json(ctx, p.out, stamp(ctx, params, body));
    return summary;
}

json cmd_semidiscrete(Context& ctx) {
    const auto& p = ctx.prm;
    const auto src = io::grid_measure_from_json(io::read_json(p.source));
    const auto tgt = io::discrete_measure_from_json(io::read_json(p.targets));
    const auto c = CostFunction::parse(p.cost);
    SemiDiscreteOptions opt;
    opt.mass_tol = p.mass_tol;
    opt.max_iterations = p.max_iter;
    const auto s = solve_semidiscrete(src, tgt, c, opt);
    json comps = json::array();
    for (std::size_t i = 0; i < tgt.size(); ++i) comps.push_back(cell_connectivity(s, static_cast<int>(i)).count);
    json summary{{"max_mass_error", s.max_mass_error},
                 {"iterations", s.iterations},
                 {"transport_cost", s.transport_cost},
                 {"components", comps}};
    json body = io::to_json(s);
    body["components"] = comps;
    emit_json(ctx, p.out,
              stamp(ctx, json{{"source", p.source}, {"targets", p.targets}, {"cost", c.spec()}, {"mass_tol", p.mass_tol}},
                    body));
    if (!p.pgm.empty()) {
        require_2d(src.geometry(), "semidiscrete");
        std::map<int, std::string> palette{{0, "no mass"}};
        for (std::size_t i = 0; i < tgt.size(); ++i) palette[int(i) + 1] = "target " + std::to_string(i);
        const auto& g = src.geometry();
        emit_pgm(ctx, p.pgm, io::encode_labels(s.labels, g.shape[0], g.shape[1], -1), io::palette_json(palette));
    }
    return summary;
}

json cmd_loeper(Context& ctx) {
    const auto& p = ctx.prm;
    const LoeperGeometry geo = parse_loeper_geometry(p.geometry);
    const int res = p.resolution > 0 ? p.resolution : 512;
    io::LoeperReport rep;
    LoeperScenario sc;
    const bool scan = geo == LoeperGeometry::hyperbolic && !p.radius && !p.spacing;
    if (scan) {
        LoeperScan s = loeper_scan(geo, res, default_loeper_radii(), default_loeper_spacings(), p.mass_tol);
        sc = std::move(s.scenario);
        rep = io::loeper_report(sc);
        rep.scan = s.tried;
        rep.first_disconnecting = s.first_disconnecting;
    } else {
        sc = loeper_demo(geo, p.radius.value_or(1.0), p.spacing.value_or(0.4), res, p.mass_tol);
        rep = io::loeper_report(sc);
    }
    json comps = json::array();
    for (const auto& c : sc.components) comps.push_back(c.count);
    json convex = json::array();
    for (const auto& c : sc.convexity) convex.push_back(c.convex);
    json summary{{"geometry", to_string(geo)},
                 {"ball_radius", sc.ball_radius},
                 {"spacing", sc.spacing},
                 {"middle_components", sc.middle_components()},
                 {"components", comps},
                 {"convex", convex},
                 {"max_mass_error", sc.solution.max_mass_error}};
    emit_json(ctx, p.out,
              stamp(ctx, json{{"geometry", to_string(geo)}, {"resolution", res}, {"scan", scan}, {"mass_tol", p.mass_tol}},
                    io::to_json(rep)));
    if (!p.pgm.empty()) {
        const auto& g = sc.solution.source.geometry();
        std::map<int, std::string> palette{{0, "outside"}, {1, "y1"}, {2, "y2"}, {3, "y3"}};
        emit_pgm(ctx, p.pgm, io::encode_labels(sc.solution.labels, g.shape[0], g.shape[1], -1),
                 io::palette_json(palette));
    }
    return summary;
}

ScreeningProblem screening_problem(const Params& p) {
    ScreeningProblem pb = p.one_dimensional ? ScreeningProblem::one_dimensional() : ScreeningProblem::rochet_chone();
    pb.kappa = p.kappa;
    return pb;
}

ScreeningOptions screening_options(const Params& p) {
    ScreeningOptions opt;
    opt.resolution = p.resolution > 0 ? p.resolution : 64;
    opt.tol = p.tol;
    opt.seed = p.seed;
    return opt;
}

void emit_screening(Context& ctx, const ScreeningSolution& s, json params) {
    const auto& p = ctx.prm;
    emit_json(ctx, p.out, stamp(ctx, std::move(params), io::to_json(s)));
    if (!p.pgm.empty()) {
        require_2d(s.u.grid, "screening");
        std::vector<int> labels;
        for (Region r : s.labels) labels.push_back(static_cast<int>(r));
        emit_pgm(ctx, p.pgm, io::encode_labels(labels, s.u.grid.shape[0], s.u.grid.shape[1], 0),
                 io::palette_json({{0, "exclusion"}, {1, "bunching"}, {2, "full_rank"}}));
    }
}

json screening_summary(const ScreeningSolution& s) {
    return json{{"exclusion", s.f0},
                {"bunching", s.f1},
                {"full_rank", s.f2},
                {"energy", s.energy},
                {"objective", s.objective},
                {"newton_steps", s.newton_steps},
                {"unbounded", s.unbounded}};
}

json cmd_screening(Context& ctx) {
    const auto& p = ctx.prm;
    const auto pb = screening_problem(p);
    const auto opt = screening_options(p);
    const auto s = solve_rochet_chone(pb, opt);
    emit_screening(ctx, s,
                   json{{"resolution", opt.resolution},
                        {"tol", opt.tol},
                        {"kappa", pb.kappa},
                        {"dim", pb.dim()}});
    json summary = screening_summary(s);
    summary["exclusion_positive"] = check_exclusion(s).positive;
    return summary;
}

json cmd_welfare(Context& ctx) {
    const auto& p = ctx.prm;
    const auto pb = screening_problem(p);
    const auto opt = screening_options(p);
    const auto w = WelfareFunction::parse(p.welfare);
    const auto s = solve_welfare(pb, w, p.lambda, opt);
    emit_screening(ctx, s,
                   json{{"resolution", opt.resolution},
                        {"tol", opt.tol},
                        {"kappa", pb.kappa},
                        {"dim", pb.dim()},
                        {"welfare", w.spec()},
                        {"lambda", p.lambda}});
    json summary = screening_summary(s);
    summary["welfare"] = s.welfare;
    return summary;
}

struct Command {
    const char* name;
    const char* help;
    Handler handler;
};

const std::vector<Command>& commands() {
    static const std::vector<Command> list{
        {"transport", "Optimal plan between two discrete measures", cmd_transport},
        {"wasserstein", "Wasserstein distance d_p between two discrete measures", cmd_wasserstein},
        {"ctransform", "c-transform of a field on atoms", cmd_ctransform},
        {"map", "Map table and Monge check from a transport solution", cmd_map},
        {"residual", "Monge-Ampere residual of a potential on a grid", cmd_residual},
        {"isoperimetric", "Transport bound for the isoperimetric inequality", cmd_isoperimetric},
        {"curvature", "Sampled cross-curvature verdicts for a cost", cmd_curvature},
        {"csegment", "Trace a c-segment", cmd_csegment},
        {"maxprinciple", "Maximum principle check along a c-segment", cmd_maxprinciple},
        {"semidiscrete", "Semi-discrete transport from a grid density to atoms", cmd_semidiscrete},
        {"loeper", "Three-target semi-discrete demo on a geodesic ball", cmd_loeper},
        {"screening", "Monopolist screening problem", cmd_screening},
        {"welfare", "Welfare-weighted screening problem", cmd_welfare},
    };
    return list;
}

void add_options(CLI::App* sub, const std::string& name, Params& p) {
    auto existing = [](CLI::Option* o) { return o->check(CLI::ExistingFile); };
    auto outputs = [&](bool raster) {
        sub->add_option("--out", p.out, "JSON output path");
        if (raster) sub->add_option("--pgm", p.pgm, "PGM raster path (sidecar written next to it)");
    };
    auto cost = [&](const char* def) {
        p.cost = def;
        sub->add_option("--cost", p.cost, "cost spec, e.g. quadratic, power_distance:1.5, sphere_sq")
            ->capture_default_str();
    };
    auto seg = [&] {
        sub->add_option("--x0", p.x0, "comma-separated base point")->required();
        sub->add_option("--y0", p.y0, "comma-separated start of the segment")->required();
        sub->add_option("--y1", p.y1, "comma-separated end of the segment")->required();
        sub->add_option("--samples", p.samples, "points along the segment (default 33)");
        sub->add_option("--dim", p.dim, "intrinsic dimension")->capture_default_str();
    };
    auto screening = [&] {
        sub->add_option("--resolution", p.resolution, "intervals per axis (default 64)");
        sub->add_option("--tol", p.tol, "relative gap tolerance")->capture_default_str();
        sub->add_option("--kappa", p.kappa, "linear manufacturing cost coefficient")->capture_default_str();
        sub->add_flag("--one-dimensional", p.one_dimensional, "types on [0, 1] instead of the unit square");
        outputs(true);
    };
    if (name == "transport") {
        existing(sub->add_option("--mu", p.mu, "source measure JSON")->required());
        existing(sub->add_option("--nu", p.nu, "target measure JSON")->required());
        cost("quadratic");
        sub->add_option("--plan-csv", p.plan_csv, "plan as i,j,mass lines");
        sub->add_option("--cycle-k", p.cycle_k, "check cyclical monotonicity up to this cycle length");
        outputs(false);
    } else if (name == "wasserstein") {
        existing(sub->add_option("--mu", p.mu, "first measure JSON")->required());
        existing(sub->add_option("--nu", p.nu, "second measure JSON")->required());
        sub->add_option("--p", p.p, "exponent")->capture_default_str();
        outputs(false);
    } else if (name == "ctransform") {
        existing(sub->add_option("--field", p.field, "field JSON {chart, atoms, values}")->required());
        existing(sub->add_option("--targets", p.targets, "JSON with chart and atoms to evaluate on")->required());
        cost("quadratic");
        sub->add_option("--direction", p.direction, "x_to_y or y_to_x")->capture_default_str();
        outputs(false);
    } else if (name == "map") {
        existing(sub->add_option("--solution", p.solution, "transport solution JSON")->required());
        sub->add_option("--threshold", p.threshold, "row split threshold")->capture_default_str();
        sub->add_option("--csv", p.csv, "map table as CSV");
        outputs(false);
    } else if (name == "residual") {
        existing(sub->add_option("--u", p.u, "potential field JSON")->required());
        existing(sub->add_option("--f-plus", p.f_plus, "source density grid JSON")->required());
        existing(sub->add_option("--f-minus", p.f_minus, "target density grid JSON")->required());
        cost("quadratic");
        outputs(true);
    } else if (name == "isoperimetric") {
        sub->add_option("--shape", p.shape, "disk, square or file")->capture_default_str();
        existing(sub->add_option("--input", p.input, "indicator grid JSON for --shape file"));
        sub->add_option("--resolution", p.resolution, "raster resolution (default 256)");
        outputs(false);
    } else if (name == "curvature") {
        cost("sphere_sq");
        p.seed = 7;
        sub->add_option("--samples", p.samples, "samples of each kind (default 1000)");
        sub->add_option("--margin", p.margin, "strict-condition margin")->capture_default_str();
        p.tol = 1e-8;
        sub->add_option("--tol", p.tol, "slack for the weak conditions")->capture_default_str();
        sub->add_option("--dim", p.dim, "intrinsic dimension")->capture_default_str();
        sub->add_option("--radius", p.radius, "geodesic radius of the sampled ball");
        sub->add_flag("--serial", p.serial, "use the serial reference loop");
        outputs(false);
    } else if (name == "csegment") {
        cost("sphere_sq");
        seg();
        outputs(false);
    } else if (name == "maxprinciple") {
        cost("sphere_sq");
        seg();
        sub->add_option("--box", p.box, "grid box lo,hi on every axis")->capture_default_str();
        sub->add_option("--resolution", p.resolution, "grid cells per axis (default 24)");
        outputs(false);
    } else if (name == "semidiscrete") {
        existing(sub->add_option("--source", p.source, "source density grid JSON")->required());
        existing(sub->add_option("--targets", p.targets, "target measure JSON")->required());
        cost("quadratic");
        sub->add_option("--mass-tol", p.mass_tol, "cell mass tolerance")->capture_default_str();
        sub->add_option("--max-iter", p.max_iter, "Newton iteration cap")->capture_default_str();
        outputs(true);
    } else if (name == "loeper") {
        sub->add_option("--geometry", p.geometry, "euclidean, sphere or hyperbolic")->capture_default_str();
        sub->add_option("--resolution", p.resolution, "grid cells per axis (default 512)");
        sub->add_option("--radius", p.radius, "geodesic ball radius (default 1.0)");
        sub->add_option("--spacing", p.spacing, "distance between consecutive targets (default 0.4)");
        sub->add_option("--mass-tol", p.mass_tol, "cell mass tolerance")->capture_default_str();
        outputs(true);
    } else if (name == "screening") {
        screening();
    } else if (name == "welfare") {
        screening();
        sub->add_option("--welfare", p.welfare, "linear or capped:<cap>")->capture_default_str();
        sub->add_option("--lambda", p.lambda, "weight on the principal's losses")->capture_default_str();
    }
    sub->add_option("--seed", p.seed, "seed for all random draws")->capture_default_str();
    sub->add_option("--out-dir", p.out_dir, "directory for relative output paths");
}

struct ConfigError : ValidationError {
    using ValidationError::ValidationError;
};

std::string config_token(const json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    if (v.is_array()) {
        std::string s;
        for (const auto& x : v) {
            if (!x.is_number()) throw ConfigError("config key \"" + key + "\": arrays must hold numbers");
            if (!s.empty()) s += ',';
            s += x.dump();
        }
        return s;
    }
    throw ConfigError("config key \"" + key + "\" has an unsupported type");
}

const std::set<std::string> kPathKeys{"mu", "nu", "field", "targets", "solution", "u", "f-plus", "f-minus",
                                      "source", "input", "out-dir"};
const std::set<std::string> kOutputKeys{"out", "plan-csv", "csv", "pgm"};

/// The top level takes no value options once --config is removed, so the
/// subcommand is the first token.
std::string leading_command(const std::vector<std::string>& args) {
    if (args.empty() || args.front().rfind("-", 0) == 0) return {};
    return args.front();
}

/// Expands --config into explicit flags. Flags given on the command line win.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
    auto it = std::find_if(args.begin(), args.end(),
                           [](const std::string& a) { return a == "--config" || a.rfind("--config=", 0) == 0; });
    if (it == args.end()) return args;
    std::string path;
    if (*it == "--config") {
        if (std::next(it) == args.end()) throw ConfigError("--config needs a path");
        path = *std::next(it);
        args.erase(it, std::next(it, 2));
    } else {
        path = it->substr(9);
        args.erase(it);
    }
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    const json cfg = io::read_json(path);
    if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
    const fs::path base = fs::path(path).parent_path();

    std::string command = leading_command(args);
    if (cfg.contains("command")) {
        const std::string c = cfg.at("command").get<std::string>();
        if (command.empty()) {
            command = c;
            args.insert(args.begin(), c);
        } else if (c != command) {
            throw ConfigError("config is for \"" + c + "\", not \"" + command + "\"");
        }
    }
    if (command.empty()) throw ConfigError("no subcommand given");
    CLI::App* sub = nullptr;
    try {
        sub = app.get_subcommand(command);
    } catch (const CLI::OptionNotFound&) {
        throw ConfigError("unknown subcommand \"" + command + "\"");
    }

    std::map<std::string, CLI::Option*> known;
    for (CLI::Option* o : sub->get_options())
        for (const auto& n : o->get_lnames()) known[n] = o;

    auto on_command_line = [&](const std::string& flag) {
        return std::any_of(args.begin(), args.end(),
                           [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    };
    // outputs go under --out-dir when there is one, else next to the config
    const bool has_out_dir = on_command_line("--out-dir") || cfg.contains("out_dir") || cfg.contains("out-dir");

    std::vector<std::string> extra;
    for (const auto& [raw, value] : cfg.items()) {
        if (raw == "command") continue;
        std::string key = raw;
        std::replace(key.begin(), key.end(), '_', '-');
        auto k = known.find(key);
        if (k == known.end() || key == "help") throw ConfigError("unknown config key \"" + raw + "\" for " + command);
        const std::string flag = "--" + key;
        if (on_command_line(flag)) continue;
        if (k->second->get_expected_min() == 0) {
            if (!value.is_boolean()) throw ConfigError("config key \"" + raw + "\" expects true or false");
            if (value.get<bool>()) extra.push_back(flag);
            continue;
        }
        std::string token = config_token(value, raw);
        const bool relocate = kPathKeys.count(key) || (kOutputKeys.count(key) && !has_out_dir);
        if (relocate && fs::path(token).is_relative() && !base.empty()) token = (base / token).string();
        extra.push_back(flag);
        extra.push_back(token);
    }
    auto pos = std::find(args.begin(), args.end(), command);
    args.insert(std::next(pos), extra.begin(), extra.end());
    return args;
}

int thread_env(std::ostream& err) {
    const char* env = std::getenv("MK_THREADS");
    if (!env || !*env) return 0;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1 || n > 4096) {
        err << "mk: MK_THREADS must be a positive integer, got \"" << env << "\"\n";
        return -1;
    }
    return static_cast<int>(n);
}

}  // namespace

std::vector<std::string> subcommands() {
    std::vector<std::string> names;
    for (const auto& c : commands()) names.push_back(c.name);
    return names;
}

int run(const std::vector<std::string>& raw, std::ostream& out, std::ostream& err) {
    Context ctx;
    auto fail = [&](int code, const std::string& msg) {
        err << "mk: " << msg << '\n';
        json s{{"command", ctx.command}, {"status", "error"}, {"exit_code", code}, {"message", msg}};
        out << io::dump_line(s) << '\n';
        return code;
    };

    const int threads = thread_env(err);
    if (threads < 0) return validation_error;

    // subcommand defaults differ, so only the selected one binds into ctx.prm
    std::vector<Params> scratch(commands().size());
    auto build = [&](CLI::App& app, const std::string& active) {
        app.require_subcommand(1);
        app.add_option("--config", "JSON scenario file whose keys replace flags");
        for (std::size_t i = 0; i < commands().size(); ++i) {
            const auto& c = commands()[i];
            CLI::App* sub = app.add_subcommand(c.name, c.help);
            add_options(sub, c.name, active == c.name ? ctx.prm : scratch[i]);
        }
    };

    CLI::App meta{"Optimal transport toolkit", "mk"};
    build(meta, "");
    std::vector<std::string> args;
    try {
        args = expand_config(meta, raw);
    } catch (const ValidationError& e) {
        err << meta.help();
        return fail(validation_error, e.what());
    }

    std::string command = leading_command(args);
    const auto names = subcommands();
    if (std::find(names.begin(), names.end(), command) == names.end()) command.clear();
    CLI::App final_parser{"Optimal transport toolkit", "mk"};
    build(final_parser, command);
    ctx.command = command;

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        final_parser.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << (command.empty() ? final_parser.help() : final_parser.get_subcommand(command)->help());
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << final_parser.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << (command.empty() ? final_parser.help() : final_parser.get_subcommand(command)->help());
        return fail(validation_error, e.what());
    }

    if (threads > 0) set_thread_limit(threads);
    const auto& list = commands();
    auto cmd = std::find_if(list.begin(), list.end(), [&](const Command& c) { return command == c.name; });
    try {
        json summary = cmd->handler(ctx);
        json line{{"command", command}, {"status", "ok"}, {"seed", ctx.prm.seed}};
        for (auto it = summary.begin(); it != summary.end(); ++it) line[it.key()] = it.value();
        line["outputs"] = ctx.outputs;
        out << io::dump_line(line) << '\n';
        return ok;
    } catch (const Error& e) {
        return fail(e.is_validation() ? validation_error : numerical_failure, e.what());
    } catch (const json::exception& e) {
        return fail(validation_error, std::string("malformed input: ") + e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(validation_error, e.what());
    } catch (const std::exception& e) {
        return fail(numerical_failure, e.what());
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace mk::cli
