#include "scex/field.hpp"

#include <map>
#include <unordered_map>

#include "scex/csv.hpp"
#include "scex/errors.hpp"

namespace scex {

FieldData FieldData::aligned_to(const SpatialGrid& grid) const {
  std::unordered_map<std::string, Eigen::Index> col;
  for (Eigen::Index j = 0; j < n_sites(); ++j) col[site_ids[j]] = j;
  FieldData out;
  out.values.resize(values.rows(), static_cast<Eigen::Index>(grid.size()));
  out.site_ids.reserve(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto it = col.find(grid.site(g).id);
    if (it == col.end())
      throw input_error("field data: no column for grid site '" + grid.site(g).id + "'");
    out.values.col(static_cast<Eigen::Index>(g)) = values.col(it->second);
    out.site_ids.push_back(grid.site(g).id);
  }
  return out;
}

FieldData load_field_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  FieldData out;
  if (t.column("site_id") >= 0 && t.column("t") >= 0 && t.column("y") >= 0) {
    // Long format; time indices may be sparse but must tile a full grid.
    const int cs = t.column("site_id"), ct = t.column("t"), cy = t.column("y");
    std::map<long, std::map<std::string, double>> by_time;
    for (const auto& row : t.rows)
      by_time[std::stol(row[ct])][row[cs]] = std::stod(row[cy]);
    if (by_time.empty()) throw input_error(path + ": no rows");
    for (const auto& [id, y] : by_time.begin()->second) {
      (void)y;
      out.site_ids.push_back(id);
    }
    out.values.resize(static_cast<Eigen::Index>(by_time.size()),
                      static_cast<Eigen::Index>(out.site_ids.size()));
    Eigen::Index r = 0;
    for (const auto& [tt, sites] : by_time) {
      (void)tt;
      if (sites.size() != out.site_ids.size())
        throw input_error(path + ": ragged long-format data");
      Eigen::Index c = 0;
      for (const auto& [id, y] : sites) {
        if (id != out.site_ids[c])
          throw input_error(path + ": inconsistent site set across times");
        out.values(r, c) = y;
        ++c;
      }
      ++r;
    }
    return out;
  }
  // Dense format: every column is a site.
  out.site_ids = t.header;
  out.values.resize(static_cast<Eigen::Index>(t.rows.size()),
                    static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.header.size(); ++j)
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::stod(t.rows[i][j]);
  return out;
}

void save_field_csv(const FieldData& data, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(data.values.rows());
  for (Eigen::Index i = 0; i < data.values.rows(); ++i) {
    std::vector<std::string> row;
    row.reserve(data.values.cols());
    for (Eigen::Index j = 0; j < data.values.cols(); ++j)
      row.push_back(format_double(data.values(i, j)));
    rows.push_back(std::move(row));
  }
  write_csv(path, data.site_ids, rows);
}

}  // namespace scex
