#include "cg3d/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cg3d/errors.hpp"
#include "cg3d/parallel.hpp"
#include "cg3d/simd.hpp"

namespace cg3d {

void Camera::validate() const {
  if (!(fov_y > 0.0 && fov_y < 180.0)) throw ValidationError("camera fov_y must lie in (0, 180)");
  if (width < 1 || height < 1) throw ValidationError("camera resolution must be at least 1x1");
  if (!(near > 0.0)) throw ValidationError("camera near plane must be positive");
  if ((look_at - position).norm() < 1e-12) throw ValidationError("camera position coincides with look_at");
  if ((look_at - position).normalized().cross(up).norm() < 1e-9)
    throw ValidationError("camera up vector is parallel to the view direction");
}

Mat3 Camera::world_to_view() const {
  const Vec3 f = (look_at - position).normalized();
  const Vec3 r = f.cross(up).normalized();
  const Vec3 d = f.cross(r);
  Mat3 w;
  w.row(0) = r;
  w.row(1) = d;
  w.row(2) = f;
  return w;
}

double Camera::focal() const { return 0.5 * height / std::tan(0.5 * deg_to_rad(fov_y)); }

Camera orbit_camera(const Vec3& target, double radius, double azimuth_deg, double elevation_deg, double fov_y,
                    int width, int height) {
  const double az = deg_to_rad(azimuth_deg), el = deg_to_rad(elevation_deg);
  Camera cam;
  cam.look_at = target;
  cam.position = target + radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
  cam.fov_y = fov_y;
  cam.width = width;
  cam.height = height;
  return cam;
}

namespace {

constexpr int kTile = 16;

struct ViewGeometry {
  Mat3 w;
  double f;
  double cx, cy;
};

ViewGeometry geometry(const Camera& cam) { return {cam.world_to_view(), cam.focal(), cam.cx(), cam.cy()}; }

Projection project_with(const Gaussian& g, const Camera& cam, const ViewGeometry& v) {
  Projection out;
  const Vec3 t = v.w * (g.mean - cam.position);
  out.depth = t.z();
  if (t.z() < cam.near) {
    out.culled = true;
    return out;
  }
  const double iz = 1.0 / t.z();
  out.mean = Vec2(v.f * t.x() * iz + v.cx, v.f * t.y() * iz + v.cy);
  Eigen::Matrix<double, 2, 3> j;
  j << v.f * iz, 0.0, -v.f * t.x() * iz * iz, 0.0, v.f * iz, -v.f * t.y() * iz * iz;
  const Mat3 m = v.w * g.covariance() * v.w.transpose();
  out.cov = j * m * j.transpose();
  out.cov(0, 0) += kCovInflation;
  out.cov(1, 1) += kCovInflation;
  return out;
}

struct Prepared {
  simd::Splat splat;
  int x0, x1, y0, y1;  // inclusive pixel bounds, already clipped
  std::size_t index;
};

struct Frame {
  std::vector<Prepared> splats;  // front to back
  std::vector<std::vector<std::uint32_t>> tiles;
  int tiles_x = 0, tiles_y = 0;
};

Frame prepare(std::span<const Gaussian> gaussians, const Camera& cam, const RenderOptions& opt, RenderStats* stats) {
  const ViewGeometry v = geometry(cam);
  struct Keyed {
    double depth;
    std::size_t index;
    Prepared p;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(gaussians.size());
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const Gaussian& g = gaussians[i];
    const Projection pr = project_with(g, cam, v);
    if (pr.culled) {
      if (stats) ++stats->culled;
      continue;
    }
    const double a = pr.cov(0, 0), b = pr.cov(0, 1), c = pr.cov(1, 1);
    const double det = a * c - b * b;
    if (!(det > 0.0) || !std::isfinite(det) || !pr.mean.allFinite()) {
      if (stats) ++stats->degenerate;
      continue;
    }
    Prepared p;
    p.index = i;
    p.splat = {pr.mean.x(), pr.mean.y(), c / det, -b / det, a / det, std::clamp(g.opacity, 0.0, 1.0),
               std::clamp(g.color.x(), 0.0, 1.0), std::clamp(g.color.y(), 0.0, 1.0),
               std::clamp(g.color.z(), 0.0, 1.0)};
    if (opt.cutoffs) {
      // Bounding box of the ellipse at Mahalanobis distance 3.
      const double hx = 3.0 * std::sqrt(a), hy = 3.0 * std::sqrt(c);
      const double lx = std::max(std::ceil(pr.mean.x() - hx), 0.0);
      const double ux = std::min(std::floor(pr.mean.x() + hx), cam.width - 1.0);
      const double ly = std::max(std::ceil(pr.mean.y() - hy), 0.0);
      const double uy = std::min(std::floor(pr.mean.y() + hy), cam.height - 1.0);
      if (lx > ux || ly > uy) continue;
      p.x0 = static_cast<int>(lx);
      p.x1 = static_cast<int>(ux);
      p.y0 = static_cast<int>(ly);
      p.y1 = static_cast<int>(uy);
    } else {
      p.x0 = 0;
      p.x1 = cam.width - 1;
      p.y0 = 0;
      p.y1 = cam.height - 1;
    }
    keyed.push_back({pr.depth, i, p});
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& l, const Keyed& r) {
    return l.depth < r.depth || (l.depth == r.depth && l.index < r.index);
  });

  Frame frame;
  frame.tiles_x = (cam.width + kTile - 1) / kTile;
  frame.tiles_y = (cam.height + kTile - 1) / kTile;
  frame.tiles.resize(static_cast<std::size_t>(frame.tiles_x) * frame.tiles_y);
  frame.splats.reserve(keyed.size());
  for (const auto& k : keyed) {
    const auto id = static_cast<std::uint32_t>(frame.splats.size());
    frame.splats.push_back(k.p);
    for (int ty = k.p.y0 / kTile; ty <= k.p.y1 / kTile; ++ty)
      for (int tx = k.p.x0 / kTile; tx <= k.p.x1 / kTile; ++tx)
        frame.tiles[static_cast<std::size_t>(ty) * frame.tiles_x + tx].push_back(id);
  }
  return frame;
}

unsigned worker_count(const RenderOptions& opt) { return opt.threads ? opt.threads : default_threads(); }

double min_transmittance(const RenderOptions& opt) { return opt.cutoffs ? opt.min_transmittance : 0.0; }

}  // namespace

Projection project(const Gaussian& g, const Camera& camera) {
  camera.validate();
  return project_with(g, camera, geometry(camera));
}

RenderedImage render(std::span<const Gaussian> gaussians, const Camera& camera, const RenderOptions& options,
                     RenderStats* stats, std::vector<double>* contribution) {
  camera.validate();
  const Frame frame = prepare(gaussians, camera, options, stats);
  const simd::Kernels& k = simd::kernels();
  const double min_t = min_transmittance(options);
  const int w = camera.width, h = camera.height;

  RenderedImage out;
  out.color = Image(w, h);
  out.alpha.assign(static_cast<std::size_t>(w) * h, 0.0);

  const std::size_t ntiles = frame.tiles.size();
  const unsigned workers = worker_count(options);
  std::vector<std::vector<double>> partial(contribution ? workers : 0);

  parallel_chunks(ntiles, workers, [&](unsigned worker, std::size_t begin, std::size_t end) {
    std::vector<double>* contrib = nullptr;
    if (contribution) {
      partial[worker].assign(frame.splats.size(), 0.0);
      contrib = &partial[worker];
    }
    double tr[kTile * kTile], rr[kTile * kTile], gg[kTile * kTile], bb[kTile * kTile];
    for (std::size_t t = begin; t < end; ++t) {
      const int tx0 = static_cast<int>(t % frame.tiles_x) * kTile;
      const int ty0 = static_cast<int>(t / frame.tiles_x) * kTile;
      const int tx1 = std::min(tx0 + kTile, w) - 1, ty1 = std::min(ty0 + kTile, h) - 1;
      std::fill(std::begin(tr), std::end(tr), 1.0);
      std::fill(std::begin(rr), std::end(rr), 0.0);
      std::fill(std::begin(gg), std::end(gg), 0.0);
      std::fill(std::begin(bb), std::end(bb), 0.0);
      std::size_t since_check = 0;
      for (const std::uint32_t id : frame.tiles[t]) {
        const Prepared& p = frame.splats[id];
        const int x0 = std::max(p.x0, tx0), x1 = std::min(p.x1, tx1);
        const int y0 = std::max(p.y0, ty0), y1 = std::min(p.y1, ty1);
        double weight = 0.0;
        for (int y = y0; y <= y1; ++y) {
          const int off = (y - ty0) * kTile + (x0 - tx0);
          weight += k.blend_span(p.splat, y, x0, x1 - x0 + 1, {tr + off, rr + off, gg + off, bb + off}, min_t,
                                 options.cutoffs);
        }
        if (contrib) (*contrib)[id] += weight;
        if (min_t > 0.0 && ++since_check == 16) {
          since_check = 0;
          bool live = false;
          for (int y = ty0; y <= ty1 && !live; ++y)
            for (int x = tx0; x <= tx1; ++x)
              if (tr[(y - ty0) * kTile + (x - tx0)] >= min_t) {
                live = true;
                break;
              }
          if (!live) break;
        }
      }
      for (int y = ty0; y <= ty1; ++y)
        for (int x = tx0; x <= tx1; ++x) {
          const int i = (y - ty0) * kTile + (x - tx0);
          out.color.at(x, y, 0) = rr[i];
          out.color.at(x, y, 1) = gg[i];
          out.color.at(x, y, 2) = bb[i];
          out.alpha[static_cast<std::size_t>(y) * w + x] = 1.0 - tr[i];
        }
    }
  });

  if (contribution) {
    contribution->assign(gaussians.size(), 0.0);
    for (const auto& part : partial) {
      if (part.empty()) continue;
      for (std::size_t s = 0; s < frame.splats.size(); ++s) (*contribution)[frame.splats[s].index] += part[s];
    }
  }
  return out;
}

void GaussianGradients::resize(std::size_t n) {
  d_mean.assign(n, Vec3::Zero());
  d_rotation.assign(n, Mat3::Zero());
  d_scale.assign(n, Vec3::Zero());
  d_opacity.assign(n, 0.0);
  d_color.assign(n, Vec3::Zero());
  d_mean2d.assign(n, Vec2::Zero());
  contribution.assign(n, 0.0);
}

void GaussianGradients::accumulate(const GaussianGradients& o) {
  if (d_mean.empty()) {
    *this = o;
    return;
  }
  if (o.d_mean.size() != d_mean.size()) throw ShapeError("gradient buffers differ in size");
  for (std::size_t i = 0; i < d_mean.size(); ++i) {
    d_mean[i] += o.d_mean[i];
    d_rotation[i] += o.d_rotation[i];
    d_scale[i] += o.d_scale[i];
    d_opacity[i] += o.d_opacity[i];
    d_color[i] += o.d_color[i];
    d_mean2d[i] += o.d_mean2d[i];
    contribution[i] += o.contribution[i];
  }
}

namespace {

// Screen-space gradients of one splat, before the chain into 3D.
struct SplatGrad {
  Vec2 mean2d = Vec2::Zero();
  double c00 = 0, c01 = 0, c11 = 0;  // dL/d(conic) as a full symmetric matrix
  double opacity = 0;
  Vec3 color = Vec3::Zero();
  double contribution = 0;

  void add(const SplatGrad& o) {
    mean2d += o.mean2d;
    c00 += o.c00;
    c01 += o.c01;
    c11 += o.c11;
    opacity += o.opacity;
    color += o.color;
    contribution += o.contribution;
  }
};

}  // namespace

GaussianGradients render_backward(std::span<const Gaussian> gaussians, const Camera& camera, const Image& residual,
                                  const RenderOptions& options) {
  camera.validate();
  if (residual.width != camera.width || residual.height != camera.height ||
      residual.rgb.size() != static_cast<std::size_t>(camera.width) * camera.height * 3)
    throw ShapeError("residual shape does not match the camera");

  const Frame frame = prepare(gaussians, camera, options, nullptr);
  const double min_t = min_transmittance(options);
  const unsigned workers = worker_count(options);
  std::vector<std::vector<SplatGrad>> partial(workers);

  parallel_chunks(frame.tiles.size(), workers, [&](unsigned worker, std::size_t begin, std::size_t end) {
    auto& acc = partial[worker];
    acc.assign(frame.splats.size(), SplatGrad{});
    struct Hit {
      std::uint32_t id;
      double alpha, t, gauss, dx, dy;
    };
    std::vector<Hit> hits;
    for (std::size_t tile = begin; tile < end; ++tile) {
      const auto& list = frame.tiles[tile];
      if (list.empty()) continue;
      const int tx0 = static_cast<int>(tile % frame.tiles_x) * kTile;
      const int ty0 = static_cast<int>(tile / frame.tiles_x) * kTile;
      const int tx1 = std::min(tx0 + kTile, camera.width) - 1, ty1 = std::min(ty0 + kTile, camera.height) - 1;
      for (int py = ty0; py <= ty1; ++py)
        for (int px = tx0; px <= tx1; ++px) {
          const Vec3 r(residual.at(px, py, 0), residual.at(px, py, 1), residual.at(px, py, 2));
          // Forward replay for this pixel, recording every blended splat.
          hits.clear();
          double t = 1.0;
          for (const std::uint32_t id : list) {
            if (t < min_t) break;
            const Prepared& p = frame.splats[id];
            if (px < p.x0 || px > p.x1 || py < p.y0 || py > p.y1) continue;
            const simd::Splat& s = p.splat;
            const double dx = px - s.mx, dy = py - s.my;
            const double power = -0.5 * (s.ca * dx * dx + s.cc * dy * dy) - s.cb * dx * dy;
            if (options.cutoffs && power < -4.5) continue;
            const double gauss = std::exp(power);
            const double alpha = s.opacity * gauss;
            hits.push_back({id, alpha, t, gauss, dx, dy});
            t *= 1.0 - alpha;
          }
          // Reverse sweep. `behind` is the colour accumulated by splats after the current one,
          // normalised to start at that splat: B_{i-1} = c_i a_i + (1 - a_i) B_i.
          Vec3 behind = Vec3::Zero();
          for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
            const simd::Splat& s = frame.splats[it->id].splat;
            const Vec3 c(s.r, s.g, s.b);
            SplatGrad& g = acc[it->id];
            const double w = it->alpha * it->t;
            g.color += w * r;
            g.contribution += w;
            const double d_alpha = it->t * r.dot(c - behind);
            behind = c * it->alpha + (1.0 - it->alpha) * behind;
            g.opacity += d_alpha * it->gauss;
            const double d_power = d_alpha * it->alpha;
            g.mean2d.x() += d_power * (s.ca * it->dx + s.cb * it->dy);
            g.mean2d.y() += d_power * (s.cb * it->dx + s.cc * it->dy);
            g.c00 += -0.5 * d_power * it->dx * it->dx;
            g.c01 += -0.5 * d_power * it->dx * it->dy;
            g.c11 += -0.5 * d_power * it->dy * it->dy;
          }
        }
    }
  });

  std::vector<SplatGrad> total(frame.splats.size());
  for (const auto& part : partial)
    for (std::size_t s = 0; s < part.size(); ++s) total[s].add(part[s]);

  GaussianGradients out;
  out.resize(gaussians.size());
  const ViewGeometry v = geometry(camera);
  for (std::size_t s = 0; s < frame.splats.size(); ++s) {
    const std::size_t i = frame.splats[s].index;
    const SplatGrad& sg = total[s];
    const Gaussian& g = gaussians[i];
    out.d_opacity[i] = sg.opacity;
    out.d_color[i] = sg.color;
    out.d_mean2d[i] = sg.mean2d;
    out.contribution[i] = sg.contribution;

    const Vec3 t = v.w * (g.mean - camera.position);
    const double iz = 1.0 / t.z(), f = v.f;
    Eigen::Matrix<double, 2, 3> j;
    j << f * iz, 0.0, -f * t.x() * iz * iz, 0.0, f * iz, -f * t.y() * iz * iz;
    const Mat3 rot = quat_to_matrix(g.rotation);
    const Mat3 l = rot * g.scale.asDiagonal();
    const Mat3 m = v.w * (l * l.transpose()) * v.w.transpose();

    Mat2 con;
    con << frame.splats[s].splat.ca, frame.splats[s].splat.cb, frame.splats[s].splat.cb, frame.splats[s].splat.cc;
    Mat2 g_con;
    g_con << sg.c00, sg.c01, sg.c01, sg.c11;
    const Mat2 g_cov = -con * g_con * con;

    const Eigen::Matrix<double, 2, 3> g_j = 2.0 * g_cov * j * m;
    const Mat3 g_m = j.transpose() * g_cov * j;
    const Mat3 g_sigma = v.w.transpose() * g_m * v.w;
    const Mat3 g_l = 2.0 * g_sigma * l;
    out.d_rotation[i] = g_l * g.scale.asDiagonal();
    for (int c = 0; c < 3; ++c) out.d_scale[i][c] = g_l.col(c).dot(rot.col(c));

    Vec3 g_t(sg.mean2d.x() * f * iz, sg.mean2d.y() * f * iz,
             -sg.mean2d.x() * f * t.x() * iz * iz - sg.mean2d.y() * f * t.y() * iz * iz);
    const double iz2 = iz * iz, iz3 = iz2 * iz;
    g_t.x() += g_j(0, 2) * (-f * iz2);
    g_t.y() += g_j(1, 2) * (-f * iz2);
    g_t.z() += g_j(0, 0) * (-f * iz2) + g_j(0, 2) * (2.0 * f * t.x() * iz3) + g_j(1, 1) * (-f * iz2) +
               g_j(1, 2) * (2.0 * f * t.y() * iz3);
    out.d_mean[i] = v.w.transpose() * g_t;
  }
  return out;
}

PoseGradient chain_pose(const Similarity& anchor, const InteractionParams& params, std::span<const Gaussian> world,
                        const GaussianGradients& grads, std::span<const std::size_t> members) {
  const Mat3 ra = quat_to_matrix(anchor.rotation);
  const Mat3 rp = quat_to_matrix(params.rotation);
  const double sa = anchor.scale, sp = params.scale;
  PoseGradient out;
  Mat3 d_r = Mat3::Zero();
  for (const std::size_t i : members) {
    const Gaussian& g = world[i];
    // World mean is A(s R y + t); recover X = A^-1(mean) and y.
    const Vec3 x = ra.transpose() * (g.mean - anchor.translation) / sa;
    const Vec3 y = rp.transpose() * (x - params.translation) / sp;
    const Vec3 g_x = sa * (ra.transpose() * grads.d_mean[i]);
    out.d_translation += g_x;
    out.d_scale += g_x.dot(x - params.translation) / sp + grads.d_scale[i].dot(g.scale) / sp;
    d_r += sp * g_x * y.transpose();
    // Gaussian orientation R_w = R_A R K, so dL/dR = R_A^T G R_w^T R_A R.
    const Mat3 rw = quat_to_matrix(g.rotation);
    d_r += ra.transpose() * grads.d_rotation[i] * rw.transpose() * ra * rp;
  }
  out.d_rotation = rotation_grad_to_quat(params.rotation, d_r);
  return out;
}

ViewGradients render_backward(const Scene& scene, const Camera& camera, const Image& residual,
                              std::span<const std::size_t> interactions, const RenderOptions& options) {
  const ObjectField flat = flatten_scene(scene);
  ViewGradients out;
  out.gaussians = render_backward(flat.gaussians(), camera, residual, options);
  for (const std::size_t k : interactions) {
    if (k >= scene.interactions.size()) throw SceneGraphError("interaction index out of range");
    const InteractionParams& p = scene.interactions[k];
    std::vector<std::size_t> members;
    for (const auto& id : scene.subtree(p.child_id)) {
      const auto idx = flat.indices_from(id);
      members.insert(members.end(), idx.begin(), idx.end());
    }
    out.d_pose.push_back(
        chain_pose(scene.world_transform(p.anchor_id), p, flat.gaussians(), out.gaussians, members));
  }
  return out;
}

double visibility(std::span<const Gaussian> gaussians, std::span<const std::size_t> members,
                  std::span<const Camera> cameras, const RenderOptions& options) {
  if (cameras.empty()) throw ValidationError("visibility needs at least one camera");
  if (members.empty()) return 0.0;
  double total = 0.0;
  std::vector<double> contribution;
  for (const Camera& cam : cameras) {
    render(gaussians, cam, options, nullptr, &contribution);
    double sum = 0.0;
    for (const std::size_t i : members) sum += contribution[i];
    total += sum / static_cast<double>(members.size());
  }
  return total / static_cast<double>(cameras.size());
}

double visibility(const Scene& scene, const std::string& child_id, std::span<const Camera> cameras,
                  const RenderOptions& options) {
  scene.object(child_id);
  const ObjectField flat = flatten_scene(scene);
  const auto members = flat.indices_from(child_id);
  return visibility(flat.gaussians(), members, cameras, options);
}

}  // namespace cg3d
