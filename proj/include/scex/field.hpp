#pragma once

// Site-by-time data container and its CSV formats: dense (one column per
// site) or long (`site_id,t,y`).

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "scex/grid.hpp"

namespace scex {

struct FieldData {
  std::vector<std::string> site_ids;
  Eigen::MatrixXd values;  // n_time x n_sites; column order matches site_ids

  Eigen::Index n_time() const { return values.rows(); }
  Eigen::Index n_sites() const { return values.cols(); }

  // Columns reordered to match the grid's site order; throws if a grid site
  // is missing from the data.
  FieldData aligned_to(const SpatialGrid& grid) const;
};

FieldData load_field_csv(const std::string& path);
void save_field_csv(const FieldData& data, const std::string& path);

}  // namespace scex
