#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mk/cconvex.hpp"
#include "mk/kantorovich.hpp"
#include "mk/measures.hpp"
#include "mk/mtw.hpp"
#include "mk/screening.hpp"
#include "mk/semidiscrete.hpp"

namespace mk::io {

using json = nlohmann::ordered_json;

json read_json(const std::filesystem::path& path);
/// Two-space indentation and a trailing newline; NaN is written as null.
void write_json(const std::filesystem::path& path, const json& doc);
std::string dump_line(const json& doc);
/// Shortest representation that reads back to the same double.
std::string format_double(double x);

json point_to_json(const Point& p);
Point point_from_json(const json& j, Chart chart);

/// {"chart", "atoms", "weights"}
json to_json(const DiscreteMeasure& m);
DiscreteMeasure discrete_measure_from_json(const json& j);
/// Atoms of any document carrying "chart" and "atoms".
std::vector<Point> points_from_json(const json& j);

json geometry_to_json(const GridGeometry& g);
GridGeometry geometry_from_json(const json& j);

/// {"chart", "box", "shape", "density"}
json to_json(const GridMeasure& m);
GridMeasure grid_measure_from_json(const json& j);

/// GridMeasure layout with "values" in place of "density".
json to_json(const PotentialField& u);
PotentialField potential_field_from_json(const json& j);

/// {"chart", "atoms", "values"}
json to_json(const AtomField& f);
AtomField atom_field_from_json(const json& j);

json to_json(const TransportSolution& s);
TransportSolution transport_solution_from_json(const json& j);

void write_plan_csv(const std::filesystem::path& path, const std::vector<PlanEntry>& plan);
std::vector<PlanEntry> read_plan_csv(const std::filesystem::path& path);

json to_json(const MapTable& m);
MapTable map_table_from_json(const json& j);

json to_json(const ResidualField& r);
ResidualField residual_from_json(const json& j);

json to_json(const CrossCurvatureReport& r);
CrossCurvatureReport curvature_report_from_json(const json& j);

json to_json(const CSegment& s);
CSegment c_segment_from_json(const json& j);

json to_json(const MaxPrincipleReport& r);
MaxPrincipleReport max_principle_from_json(const json& j);

json to_json(const IsoperimetricReport& r);
IsoperimetricReport isoperimetric_from_json(const json& j);

json to_json(const SemiDiscreteSolution& s);
/// Restores the weights, labels and diagnostics; the source and targets are
/// read from the embedded measures.
SemiDiscreteSolution semidiscrete_from_json(const json& j);

json to_json(const ComponentReport& r);
ComponentReport component_report_from_json(const json& j);

json to_json(const ConvexityReport& r);
ConvexityReport convexity_report_from_json(const json& j);

/// Scenario report without the per-cell arrays (those go to the raster).
struct LoeperReport {
    std::string geometry;
    double ball_radius = 0.0, spacing = 0.0;
    int resolution = 0;
    Eigen::VectorXd weights, masses;
    double max_mass_error = 0.0;
    int iterations = 0;
    std::vector<ComponentReport> components;
    std::vector<ConvexityReport> convexity;
    std::vector<LoeperScanEntry> scan;
    int first_disconnecting = -1;
};
LoeperReport loeper_report(const LoeperScenario& s);
json to_json(const LoeperReport& r);
LoeperReport loeper_report_from_json(const json& j);

json to_json(const ScreeningSolution& s);
ScreeningSolution screening_solution_from_json(const json& j);

/// 2-D raster in plain PGM (P2). Row r of the image is index r of the first
/// grid axis; columns follow the second axis.
struct Raster {
    int rows = 0, cols = 0;
    int maxval = 255;
    std::vector<int> pixels;  // row-major
};

void write_pgm(const std::filesystem::path& path, const Raster& r);
Raster read_pgm(const std::filesystem::path& path);

/// Affine map of finite values onto 1..255 (0 for NaN) with parameters.
struct AffineEncoding {
    double lo = 0.0, hi = 0.0;
    int missing_level = 0;
    bool has_missing = false;
};
Raster encode_affine(const std::vector<double>& values, int rows, int cols, AffineEncoding& enc);
/// Level midpoints back to values; NaN at the missing level.
std::vector<double> decode_affine(const Raster& r, const AffineEncoding& enc);
json to_json(const AffineEncoding& e);
AffineEncoding affine_encoding_from_json(const json& j);

/// Index raster: level = label - first_label; palette names per level.
Raster encode_labels(const std::vector<int>& labels, int rows, int cols, int first_label);
json palette_json(const std::map<int, std::string>& palette);

/// Sidecar path: image.pgm -> image.pgm.json
std::filesystem::path sidecar_path(const std::filesystem::path& pgm);

}  // namespace mk::io
