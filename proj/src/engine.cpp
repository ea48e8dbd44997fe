#include "ncf/engine.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ncf/errors.hpp"
#include "ncf/kernels.hpp"
#include "ncf/meta_io.hpp"
#include "ncf/model.hpp"

namespace ncf::engine {

void validate(const RunConfig& cfg) {
  if (cfg.iterations < 1) throw std::invalid_argument("config: iterations must be >= 1");
  if (!(cfg.lr0 >= cfg.lr1 && cfg.lr1 > 0))
    throw std::invalid_argument("config: need lr0 >= lr1 > 0");
  if (cfg.weights.alpha < 0 || cfg.weights.beta < 0 || cfg.weights.gamma < 0)
    throw std::invalid_argument("config: loss weights must be non-negative");
  if (cfg.hidden_width < 1) throw std::invalid_argument("config: hidden_width must be >= 1");
  if (cfg.sm_channels < 1) throw std::invalid_argument("config: sm_channels must be >= 1");
  if (!(cfg.activation_slope >= 0 && cfg.activation_slope < 1))
    throw std::invalid_argument("config: activation_slope must be in [0,1)");
  if (!(cfg.hu_window[0] < cfg.hu_window[1]))
    throw std::invalid_argument("config: hu_window must satisfy lo < hi");
  if (cfg.ssim_window < 1 || cfg.ssim_window % 2 == 0)
    throw std::invalid_argument("config: ssim_window must be odd and positive");
  if (cfg.log_every < 0) throw std::invalid_argument("config: log_every must be >= 0");
}

LoadedRunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("config parse error in " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw io_error("config must be a JSON object: " + path.string());

  LoadedRunConfig out;
  RunConfig& c = out.config;
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "iterations") c.iterations = val.get<int>();
      else if (key == "lr0") c.lr0 = val.get<real>();
      else if (key == "lr1") c.lr1 = val.get<real>();
      else if (key == "alpha") c.weights.alpha = val.get<real>();
      else if (key == "beta") c.weights.beta = val.get<real>();
      else if (key == "gamma") c.weights.gamma = val.get<real>();
      else if (key == "hidden_width") c.hidden_width = val.get<int>();
      else if (key == "sm_channels") c.sm_channels = val.get<int>();
      else if (key == "activation_slope") c.activation_slope = val.get<real>();
      else if (key == "seed") c.seed = val.get<uint64_t>();
      else if (key == "hu_window") c.hu_window = val.get<std::array<double, 2>>();
      else if (key == "ssim_window") c.ssim_window = val.get<int>();
      else if (key == "deterministic") c.deterministic = val.get<bool>();
      else if (key == "log_every") c.log_every = val.get<int>();
      else out.unknown_keys.push_back(key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw io_error("config value error in " + path.string() + ": " + e.what());
  }
  validate(c);
  return out;
}

std::pair<Volume, Volume> normalize_pair(const Volume& fixed, const Volume& moving,
                                         const RunConfig& cfg) {
  if (fixed.unit == IntensityUnit::HU) {
    return {normalize_intensity(fixed, cfg.hu_window[0], cfg.hu_window[1]),
            normalize_intensity(moving, cfg.hu_window[0], cfg.hu_window[1])};
  }
  real lo = fixed.data.empty() ? real(0) : fixed.data[0];
  real hi = lo;
  for (real v : fixed.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(lo < hi))
    throw std::invalid_argument("fixed image is constant; cannot derive an intensity window");
  return {normalize_intensity(fixed, lo, hi), normalize_intensity(moving, lo, hi)};
}

RegistrationResult register_pair(const Volume& fixed, const Volume& moving,
                                 const RunConfig& cfg, const ProgressFn& progress) {
  validate(cfg);
  if (fixed.shape != moving.shape)
    throw std::invalid_argument("register_pair: fixed and moving shapes differ");
  const int min_ext = std::min({fixed.shape[0], fixed.shape[1], fixed.shape[2]});
  if (cfg.ssim_window > min_ext)
    throw std::invalid_argument("register_pair: ssim_window exceeds the smallest extent");

  const auto t_start = std::chrono::steady_clock::now();

  auto [fixed_n, moving_n] = normalize_pair(fixed, moving, cfg);
  const Tensor fixed_t = fixed_n.as_tensor();
  const Tensor moving_t = moving_n.as_tensor();

  const Grid grid = make_grid(fixed.shape);
  model::ModelConfig mc;
  mc.hidden_width = cfg.hidden_width;
  mc.sm_channels = cfg.sm_channels;
  mc.activation_slope = cfg.activation_slope;
  model::ModelParams params = model::init_params(mc, cfg.seed);
  auto refs = params.enumerate_params();

  model::NcfPipeline pipe;
  losses::LossPipeline loss;
  loss.weights = cfg.weights;
  loss.ssim_params.window = cfg.ssim_window;

  RegistrationResult res;
  res.loss_history.reserve(static_cast<size_t>(cfg.iterations));

  Tensor warped, g_phi;
  for (int step = 0; step < cfg.iterations; ++step) {
    const real lr = kernels::cosine_lr(step, cfg.iterations, cfg.lr0, cfg.lr1);

    pipe.forward(params, grid);
    kernels::trilinear_sample_forward(moving_t, pipe.phi, warped);
    const losses::LossBreakdown b = loss.forward(fixed_t, warped, pipe.phi, moving.shape);
    if (!std::isfinite(b.total)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (photometric=" << b.photometric
          << " ssim=" << b.ssim << " occupancy=" << b.occupancy << ")";
      throw numerical_error(msg.str());
    }
    res.loss_history.push_back(b);

    loss.backward(fixed_t, warped, pipe.phi);
    kernels::trilinear_sample_backward(moving_t, pipe.phi, loss.g_warped, nullptr, &g_phi);
    const int64_t n = g_phi.numel();
    const real* go = loss.g_phi.data.data();
    real* gp = g_phi.data.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) gp[i] += go[i];

    pipe.backward(params, g_phi);
    for (size_t i = 0; i < refs.size(); ++i)
      kernels::adam_step(*refs[i].value, refs[i].grad->data, params.adam[i], lr, refs[i].name);

    res.final_lr = lr;
    if (progress && cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.iterations - 1))
      progress(step, lr, b);
  }

  // Final field in voxel units; the published warped image goes through the
  // same resampler the warp command uses.
  pipe.forward(params, grid);
  VectorField offset_n;
  offset_n.data = pipe.offset;
  offset_n.unit = FieldUnit::NormalizedOffset;
  offset_n.spacing = {fixed.spacing[0], fixed.spacing[1], fixed.spacing[2]};
  res.offset = convert_field(offset_n, FieldUnit::VoxelDisplacement);
  res.warped = warp_image(moving, res.offset, Interp::Linear);

  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

Volume warp_image(const Volume& moving, const VectorField& offset, Interp interp) {
  if (offset.unit != FieldUnit::VoxelDisplacement)
    throw std::invalid_argument("warp_image: offset must be in voxel_displacement units");
  if (offset.spatial_shape() != moving.shape)
    throw std::invalid_argument("warp_image: field and image shapes differ");
  const int w = moving.shape[0], h = moving.shape[1], d = moving.shape[2];
  const int64_t n = spatial_numel(w, h, d);
  const real* ux = offset.data.data.data();
  const real* uy = ux + n;
  const real* uz = uy + n;
  const real* src = moving.data.data();

  Volume out = moving;
#pragma omp parallel for schedule(static)
  for (int z = 0; z < d; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int64_t i = idx3(x, y, z, w, h);
        const real px = real(x) + ux[i];
        const real py = real(y) + uy[i];
        const real pz = real(z) + uz[i];
        if (interp == Interp::Linear) {
          out.data[static_cast<size_t>(i)] = kernels::trilinear_at(src, w, h, d, px, py, pz);
        } else {
          out.data[static_cast<size_t>(i)] =
              src[idx3(kernels::nearest_index(px, w), kernels::nearest_index(py, h),
                       kernels::nearest_index(pz, d), w, h)];
        }
      }
  return out;
}

void export_field(const VectorField& f, const std::filesystem::path& path) {
  const auto sp = f.spatial_shape();
  MetaImage img;
  img.dims = {sp[0], sp[1], 3 * sp[2]};  // three channels stacked along z
  img.spacing = f.spacing;
  img.etype = ElementType::Double;
  img.data = f.data.data;
  img.tags["NCF_FIELD_UNIT"] = f.unit == FieldUnit::VoxelDisplacement ? "voxel" : "normalized";
  img.tags["NCF_FIELD_CHANNELS"] = "3";
  write_meta_image(img, path);
}

VectorField import_field(const std::filesystem::path& path) {
  MetaImage img = read_meta_image(path);
  const auto unit_it = img.tags.find("NCF_FIELD_UNIT");
  if (unit_it == img.tags.end())
    throw io_error("field file lacks the NCF_FIELD_UNIT tag: " + path.string());
  const auto ch_it = img.tags.find("NCF_FIELD_CHANNELS");
  if (ch_it == img.tags.end())
    throw io_error("field file lacks the NCF_FIELD_CHANNELS tag: " + path.string());
  if (ch_it->second != "3")
    throw io_error("field file has " + ch_it->second + " channel(s), expected 3: " +
                   path.string());
  if (img.dims[2] % 3 != 0)
    throw io_error("field file depth is not divisible by the channel count: " + path.string());

  VectorField f;
  if (unit_it->second == "voxel") f.unit = FieldUnit::VoxelDisplacement;
  else if (unit_it->second == "normalized") f.unit = FieldUnit::NormalizedOffset;
  else throw io_error("unknown NCF_FIELD_UNIT value \"" + unit_it->second + "\" in " + path.string());
  f.spacing = img.spacing;
  f.data = Tensor({3, img.dims[0], img.dims[1], img.dims[2] / 3});
  f.data.data = std::move(img.data);
  return f;
}

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<losses::LossBreakdown>& history, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write loss log: " + path.string());
  out << "step,lr,total,photometric,ssim,occupancy\n";
  out.precision(12);
  for (size_t i = 0; i < history.size(); ++i) {
    const real lr =
        kernels::cosine_lr(static_cast<int64_t>(i), cfg.iterations, cfg.lr0, cfg.lr1);
    const auto& b = history[i];
    out << i << ',' << lr << ',' << b.total << ',' << b.photometric << ',' << b.ssim << ','
        << b.occupancy << '\n';
  }
  if (!out) throw io_error("write failed: " + path.string());
}

}  // namespace ncf::engine
