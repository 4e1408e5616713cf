#pragma once

// Spatial domain: sites as grid-cell centres, anisotropy-aware distance
// metrics, and named aggregation regions.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace scex {

struct Coord {
  double x = 0.0;  // easting, km
  double y = 0.0;  // northing, km
};

// Coordinate transform s* = diag(1, 1/L) * Rot(theta) * s.
struct AnisotropyParams {
  double theta = 0.0;  // radians, in [-pi/2, 0]
  double stretch = 1.0;  // L > 0; (theta=0, L=1) is the isotropic metric

  void validate() const;
  static AnisotropyParams isotropic() { return {}; }
};

Coord transform_coordinates(const Coord& site, const AnisotropyParams& aniso);
Coord inverse_transform_coordinates(const Coord& site, const AnisotropyParams& aniso);

enum class DistanceMetric { Planar, GreatCircle };

struct Site {
  std::string id;
  Coord pos;                       // km (OSGB-style easting/northing)
  std::optional<double> lat, lon;  // degrees, only needed for great-circle
};

class SpatialGrid {
 public:
  SpatialGrid(std::vector<Site> sites, double cell_size_km);

  std::size_t size() const { return sites_.size(); }
  const Site& site(std::size_t i) const { return sites_[i]; }
  const std::vector<Site>& sites() const { return sites_; }
  double cell_size() const { return cell_size_; }
  double cell_area() const { return cell_size_ * cell_size_; }

  std::size_t index_of(const std::string& site_id) const;  // throws on unknown

  double distance(std::size_t a, std::size_t b, const AnisotropyParams& aniso,
                  DistanceMetric metric = DistanceMetric::Planar) const;

  // Dense symmetric matrix of pairwise distances.
  Eigen::MatrixXd distance_matrix(const AnisotropyParams& aniso,
                                  DistanceMetric metric = DistanceMetric::Planar) const;

 private:
  std::vector<Site> sites_;
  double cell_size_;
};

// Great-circle distance (haversine, spherical Earth radius 6371 km).
double great_circle_km(double lat1, double lon1, double lat2, double lon2);

struct Region {
  std::string name;
  std::vector<std::size_t> members;  // site indices, sorted ascending
  double area = 0.0;                 // |members| * cell_size^2

  static Region from_site_ids(const std::string& name,
                              const std::vector<std::string>& site_ids,
                              const SpatialGrid& grid);
  bool contains(const Region& other) const;  // other subseteq this
};

// File formats: grid CSV `site_id,x_km,y_km[,lat,lon]`; regions as a JSON
// array of {"name":..., "site_ids":[...]}.
SpatialGrid load_grid_csv(const std::string& path, double cell_size_km);
void save_grid_csv(const SpatialGrid& grid, const std::string& path);
std::vector<Region> load_regions_json(const std::string& path, const SpatialGrid& grid);
void save_regions_json(const std::vector<Region>& regions, const SpatialGrid& grid,
                       const std::string& path);

// Regular nx-by-ny grid of cell centres with the given spacing, sites named
// "r<i>c<j>"; used by the synthetic generator and tests.
SpatialGrid make_regular_grid(int nx, int ny, double cell_size_km);

}  // namespace scex
