#include "scex/grid.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "scex/csv.hpp"
#include "scex/errors.hpp"

namespace scex {

using nlohmann::json;

void AnisotropyParams::validate() const {
  constexpr double kHalfPi = 1.5707963267948966;
  if (!(stretch > 0.0)) throw config_error("anisotropy: L must be > 0");
  if (!(theta >= -kHalfPi && theta <= 0.0))
    throw config_error("anisotropy: theta must lie in [-pi/2, 0]");
}

Coord transform_coordinates(const Coord& site, const AnisotropyParams& aniso) {
  if (!std::isfinite(site.x) || !std::isfinite(site.y))
    throw input_error("transform_coordinates: non-finite coordinates");
  aniso.validate();
  const double c = std::cos(aniso.theta), s = std::sin(aniso.theta);
  const double rx = c * site.x - s * site.y;
  const double ry = s * site.x + c * site.y;
  return {rx, ry / aniso.stretch};
}

Coord inverse_transform_coordinates(const Coord& site, const AnisotropyParams& aniso) {
  aniso.validate();
  const double c = std::cos(aniso.theta), s = std::sin(aniso.theta);
  const double ux = site.x;
  const double uy = site.y * aniso.stretch;
  return {c * ux + s * uy, -s * ux + c * uy};
}

SpatialGrid::SpatialGrid(std::vector<Site> sites, double cell_size_km)
    : sites_(std::move(sites)), cell_size_(cell_size_km) {
  if (!(cell_size_ > 0.0)) throw config_error("grid: cell_size must be > 0");
  if (sites_.empty()) throw config_error("grid: no sites");
  std::unordered_set<std::string> seen;
  for (const auto& s : sites_) {
    if (!seen.insert(s.id).second)
      throw config_error("grid: duplicate site_id '" + s.id + "'");
    if (!std::isfinite(s.pos.x) || !std::isfinite(s.pos.y))
      throw input_error("grid: non-finite coordinates for site '" + s.id + "'");
  }
  // Cells are non-overlapping: centre separation at least one cell size.
  const double min_sep = cell_size_ * (1.0 - 1e-9);
  for (std::size_t i = 0; i < sites_.size(); ++i)
    for (std::size_t j = i + 1; j < sites_.size(); ++j) {
      const double dx = sites_[i].pos.x - sites_[j].pos.x;
      const double dy = sites_[i].pos.y - sites_[j].pos.y;
      if (std::hypot(dx, dy) < min_sep)
        throw config_error("grid: cells overlap for sites '" + sites_[i].id +
                           "' and '" + sites_[j].id + "'");
    }
}

std::size_t SpatialGrid::index_of(const std::string& site_id) const {
  for (std::size_t i = 0; i < sites_.size(); ++i)
    if (sites_[i].id == site_id) return i;
  throw input_error("grid: unknown site_id '" + site_id + "'");
}

double great_circle_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusKm = 6371.0;
  constexpr double kDeg = 0.017453292519943295;
  const double phi1 = lat1 * kDeg, phi2 = lat2 * kDeg;
  const double dphi = (lat2 - lat1) * kDeg;
  const double dlam = (lon2 - lon1) * kDeg;
  const double a = std::sin(0.5 * dphi) * std::sin(0.5 * dphi) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(0.5 * dlam) *
                       std::sin(0.5 * dlam);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

double SpatialGrid::distance(std::size_t a, std::size_t b,
                             const AnisotropyParams& aniso,
                             DistanceMetric metric) const {
  if (a >= sites_.size() || b >= sites_.size())
    throw input_error("grid: site index out of range");
  if (a == b) return 0.0;
  if (metric == DistanceMetric::GreatCircle) {
    // Great-circle applies to untransformed lat/lon only; the anisotropic
    // metric is defined on planar km coordinates.
    const auto& sa = sites_[a];
    const auto& sb = sites_[b];
    if (!sa.lat || !sa.lon || !sb.lat || !sb.lon)
      throw input_error("grid: great-circle distance needs lat/lon for sites");
    return great_circle_km(*sa.lat, *sa.lon, *sb.lat, *sb.lon);
  }
  const Coord ta = transform_coordinates(sites_[a].pos, aniso);
  const Coord tb = transform_coordinates(sites_[b].pos, aniso);
  return std::hypot(ta.x - tb.x, ta.y - tb.y);
}

Eigen::MatrixXd SpatialGrid::distance_matrix(const AnisotropyParams& aniso,
                                             DistanceMetric metric) const {
  const std::size_t d = sites_.size();
  Eigen::MatrixXd m(d, d);
  if (metric == DistanceMetric::Planar) {
    std::vector<Coord> t(d);
    for (std::size_t i = 0; i < d; ++i)
      t[i] = transform_coordinates(sites_[i].pos, aniso);
    for (std::size_t i = 0; i < d; ++i) {
      m(i, i) = 0.0;
      for (std::size_t j = i + 1; j < d; ++j) {
        const double h = std::hypot(t[i].x - t[j].x, t[i].y - t[j].y);
        m(i, j) = h;
        m(j, i) = h;
      }
    }
  } else {
    for (std::size_t i = 0; i < d; ++i) {
      m(i, i) = 0.0;
      for (std::size_t j = i + 1; j < d; ++j) {
        const double h = distance(i, j, aniso, metric);
        m(i, j) = h;
        m(j, i) = h;
      }
    }
  }
  return m;
}

Region Region::from_site_ids(const std::string& name,
                             const std::vector<std::string>& site_ids,
                             const SpatialGrid& grid) {
  if (site_ids.empty()) throw config_error("region '" + name + "' is empty");
  Region r;
  r.name = name;
  std::unordered_set<std::size_t> seen;
  for (const auto& id : site_ids) {
    const std::size_t idx = grid.index_of(id);
    if (seen.insert(idx).second) r.members.push_back(idx);
  }
  std::sort(r.members.begin(), r.members.end());
  r.area = static_cast<double>(r.members.size()) * grid.cell_area();
  return r;
}

bool Region::contains(const Region& other) const {
  return std::includes(members.begin(), members.end(), other.members.begin(),
                       other.members.end());
}

SpatialGrid load_grid_csv(const std::string& path, double cell_size_km) {
  const CsvTable t = read_csv(path);
  const int ci = t.require_column("site_id");
  const int cx = t.require_column("x_km");
  const int cy = t.require_column("y_km");
  const int clat = t.column("lat");
  const int clon = t.column("lon");
  std::vector<Site> sites;
  sites.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    Site s;
    s.id = row[ci];
    s.pos = {std::stod(row[cx]), std::stod(row[cy])};
    if (clat >= 0 && clon >= 0 && !row[clat].empty() && !row[clon].empty()) {
      s.lat = std::stod(row[clat]);
      s.lon = std::stod(row[clon]);
    }
    sites.push_back(std::move(s));
  }
  return SpatialGrid(std::move(sites), cell_size_km);
}

void save_grid_csv(const SpatialGrid& grid, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  bool any_latlon = false;
  for (const auto& s : grid.sites())
    if (s.lat && s.lon) any_latlon = true;
  for (const auto& s : grid.sites()) {
    std::vector<std::string> row{s.id, format_double(s.pos.x), format_double(s.pos.y)};
    if (any_latlon) {
      row.push_back(s.lat ? format_double(*s.lat) : "");
      row.push_back(s.lon ? format_double(*s.lon) : "");
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::string> header{"site_id", "x_km", "y_km"};
  if (any_latlon) {
    header.push_back("lat");
    header.push_back("lon");
  }
  write_csv(path, header, rows);
}

std::vector<Region> load_regions_json(const std::string& path, const SpatialGrid& grid) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw input_error(path + ": invalid JSON: " + e.what());
  }
  if (!doc.is_array()) throw input_error(path + ": expected a JSON array of regions");
  std::vector<Region> regions;
  for (const auto& item : doc) {
    const std::string name = item.at("name").get<std::string>();
    std::vector<std::string> ids;
    for (const auto& id : item.at("site_ids")) ids.push_back(id.get<std::string>());
    regions.push_back(Region::from_site_ids(name, ids, grid));
  }
  if (regions.empty()) throw input_error(path + ": no regions defined");
  return regions;
}

void save_regions_json(const std::vector<Region>& regions, const SpatialGrid& grid,
                       const std::string& path) {
  json doc = json::array();
  for (const auto& r : regions) {
    json item;
    item["name"] = r.name;
    json ids = json::array();
    for (const std::size_t m : r.members) ids.push_back(grid.site(m).id);
    item["site_ids"] = std::move(ids);
    doc.push_back(std::move(item));
  }
  write_text_file(path, doc.dump(2) + "\n");
}

SpatialGrid make_regular_grid(int nx, int ny, double cell_size_km) {
  if (nx < 1 || ny < 1) throw config_error("make_regular_grid: empty grid");
  std::vector<Site> sites;
  sites.reserve(static_cast<std::size_t>(nx) * ny);
  for (int i = 0; i < ny; ++i)
    for (int j = 0; j < nx; ++j) {
      Site s;
      s.id = "r" + std::to_string(i) + "c" + std::to_string(j);
      s.pos = {(j + 0.5) * cell_size_km, (i + 0.5) * cell_size_km};
      sites.push_back(std::move(s));
    }
  return SpatialGrid(std::move(sites), cell_size_km);
}

}  // namespace scex
