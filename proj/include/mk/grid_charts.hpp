#pragma once

#include <Eigen/Dense>

#include "mk/measures.hpp"

namespace mk {

/// Chart whose coordinates coincide with the grid coordinates, centred at xi.
LocalChart grid_chart_at(const GridGeometry& grid, const Eigen::VectorXd& xi);
/// Grid coordinates of a point of the grid's chart.
Eigen::VectorXd grid_coordinates(const GridGeometry& grid, const Point& p);

}  // namespace mk
