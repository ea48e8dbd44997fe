#include "ncf/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ncf/errors.hpp"
#include "ncf/kernels.hpp"

namespace ncf::metrics {

real dice(const Volume& a, const Volume& b) {
  if (a.shape != b.shape) throw std::invalid_argument("dice: mask shapes differ");
  const int64_t n = a.numel();
  int64_t ca = 0, cb = 0, inter = 0;
  for (int64_t i = 0; i < n; ++i) {
    const real va = a.data[static_cast<size_t>(i)];
    const real vb = b.data[static_cast<size_t>(i)];
    if ((va != 0 && va != 1) || (vb != 0 && vb != 1))
      throw std::invalid_argument("dice: masks must be binary (0/1)");
    ca += va == 1;
    cb += vb == 1;
    inter += va == 1 && vb == 1;
  }
  if (ca + cb == 0) return 1;
  return real(2 * inter) / real(ca + cb);
}

EndpointError endpoint_error(const VectorField& pred, const VectorField& gt,
                             const Volume* mask) {
  if (pred.unit != FieldUnit::VoxelDisplacement || gt.unit != FieldUnit::VoxelDisplacement)
    throw std::invalid_argument("endpoint_error: both fields must be voxel_displacement");
  if (!pred.data.same_shape(gt.data))
    throw std::invalid_argument("endpoint_error: field shapes differ");
  const auto sp = pred.spatial_shape();
  if (mask && mask->shape != sp)
    throw std::invalid_argument("endpoint_error: mask shape differs from fields");

  const int64_t n = spatial_numel(sp[0], sp[1], sp[2]);
  const real* px = pred.data.data.data();
  const real* gx = gt.data.data.data();
  EndpointError e;
  real sum = 0;
  int64_t count = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (mask && mask->data[static_cast<size_t>(i)] <= real(0.5)) continue;
    const real dx = px[i] - gx[i];
    const real dy = px[n + i] - gx[n + i];
    const real dz = px[2 * n + i] - gx[2 * n + i];
    const real d = std::sqrt(dx * dx + dy * dy + dz * dz);
    sum += d;
    e.max = std::max(e.max, d);
    ++count;
  }
  e.mean = count > 0 ? sum / real(count) : real(0);
  return e;
}

real jacobian_folding(const VectorField& offset) {
  if (offset.unit != FieldUnit::VoxelDisplacement)
    throw std::invalid_argument("jacobian_folding: field must be voxel_displacement");
  const auto sp = offset.spatial_shape();
  if (sp[0] < 3 || sp[1] < 3 || sp[2] < 3)
    throw std::invalid_argument("jacobian_folding: every axis must have size >= 3");
  const int w = sp[0], h = sp[1], d = sp[2];
  const int64_t n = spatial_numel(w, h, d);
  const real* u[3] = {offset.data.data.data(), offset.data.data.data() + n,
                      offset.data.data.data() + 2 * n};

  int64_t folded = 0;
#pragma omp parallel for schedule(static) reduction(+ : folded)
  for (int z = 1; z < d - 1; ++z)
    for (int y = 1; y < h - 1; ++y)
      for (int x = 1; x < w - 1; ++x) {
        real j[3][3];
        const int64_t dx = 1, dy = w, dz = static_cast<int64_t>(w) * h;
        const int64_t i = idx3(x, y, z, w, h);
        for (int a = 0; a < 3; ++a) {
          j[a][0] = (u[a][i + dx] - u[a][i - dx]) * real(0.5);
          j[a][1] = (u[a][i + dy] - u[a][i - dy]) * real(0.5);
          j[a][2] = (u[a][i + dz] - u[a][i - dz]) * real(0.5);
          j[a][a] += real(1);
        }
        const real det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
                         j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
                         j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
        if (det <= real(0)) ++folded;
      }
  const int64_t interior = static_cast<int64_t>(w - 2) * (h - 2) * (d - 2);
  return real(folded) / real(interior);
}

Landmarks load_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open landmarks file: " + path.string());
  Landmarks lm;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::array<real, 6> p{};
    if (!(ss >> p[0] >> p[1] >> p[2] >> p[3] >> p[4] >> p[5]))
      throw io_error("malformed landmark line " + std::to_string(lineno) + " in " +
                     path.string());
    lm.pairs.push_back(p);
  }
  return lm;
}

void save_landmarks(const Landmarks& lm, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write landmarks file: " + path.string());
  out.precision(17);
  for (const auto& p : lm.pairs)
    out << p[0] << ' ' << p[1] << ' ' << p[2] << ' ' << p[3] << ' ' << p[4] << ' ' << p[5]
        << '\n';
  if (!out) throw io_error("write failed: " + path.string());
}

real tre(const Landmarks& lm, const VectorField& offset, std::array<double, 3> spacing) {
  if (offset.unit != FieldUnit::VoxelDisplacement)
    throw std::invalid_argument("tre: field must be voxel_displacement");
  if (lm.pairs.empty()) return 0;
  const auto sp = offset.spatial_shape();
  const int64_t n = spatial_numel(sp[0], sp[1], sp[2]);
  const real* u[3] = {offset.data.data.data(), offset.data.data.data() + n,
                      offset.data.data.data() + 2 * n};
  real sum = 0;
  for (const auto& p : lm.pairs) {
    for (int a = 0; a < 3; ++a) {
      if (!(p[static_cast<size_t>(a)] >= 0 && p[static_cast<size_t>(a)] <= real(sp[a] - 1)) ||
          !(p[static_cast<size_t>(a + 3)] >= 0 && p[static_cast<size_t>(a + 3)] <= real(sp[a] - 1)))
        throw std::invalid_argument("tre: landmark outside the volume");
    }
    real warped[3], delta[3];
    for (int a = 0; a < 3; ++a)
      warped[a] = p[static_cast<size_t>(a)] +
                  kernels::trilinear_at(u[a], sp[0], sp[1], sp[2], p[0], p[1], p[2]);
    for (int a = 0; a < 3; ++a)
      delta[a] = (warped[a] - p[static_cast<size_t>(a + 3)]) * real(spacing[static_cast<size_t>(a)]);
    sum += std::sqrt(delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]);
  }
  return sum / real(lm.pairs.size());
}

}  // namespace ncf::metrics
