#include "cg3d/io/wire.hpp"

#include <httplib.h>

#include <cstring>
#include <mutex>
#include <thread>

#include "cg3d/errors.hpp"
#include "cg3d/io/files.hpp"
#include "cg3d/io/png.hpp"

namespace cg3d::io {

using nlohmann::json;

namespace {

json vec_json(const auto& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <class V>
V vec_from(const json& j) {
  V v;
  if (!j.is_array() || j.size() != static_cast<std::size_t>(v.size())) throw OracleError("malformed vector in message");
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

std::string float_image_bytes(const Image& img) {
  std::string bytes(img.rgb.size() * sizeof(float), '\0');
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    const float f = static_cast<float>(img.rgb[i]);
    std::memcpy(bytes.data() + i * sizeof f, &f, sizeof f);
  }
  return bytes;
}

}  // namespace

json request_to_json(const OracleRequest& r) {
  json j{{"prompt", r.prompt},
         {"view_suffix", r.view_suffix},
         {"cfg_scale", r.cfg_scale},
         {"timestep_range", {r.timestep_range[0], r.timestep_range[1]}},
         {"loss_scale", r.loss_scale},
         {"rescale_factor", r.rescale_factor},
         {"want_residual", r.want_residual},
         {"seed", r.seed}};
  json images = json::array();
  for (const Image& img : r.images) images.push_back(base64_encode(encode_png(img)));
  j["images"] = std::move(images);
  if (!r.cameras.empty()) {
    json cams = json::array();
    for (const Camera& c : r.cameras)
      cams.push_back({{"position", vec_json(c.position)},
                      {"look_at", vec_json(c.look_at)},
                      {"up", vec_json(c.up)},
                      {"fov_y", c.fov_y},
                      {"width", c.width},
                      {"height", c.height},
                      {"near", c.near}});
    j["cameras"] = std::move(cams);
  }
  if (r.candidate) {
    const InteractionParams& p = *r.candidate;
    j["candidate"] = {{"anchor", p.anchor_id},
                      {"child", p.child_id},
                      {"rotation", vec_json(p.rotation)},
                      {"translation", vec_json(p.translation)},
                      {"scale", p.scale}};
  }
  return j;
}

OracleRequest request_from_json(const json& j) {
  try {
    OracleRequest r;
    r.prompt = j.at("prompt").get<std::string>();
    r.view_suffix = j.value("view_suffix", std::string{});
    r.cfg_scale = j.at("cfg_scale").get<double>();
    r.timestep_range = j.at("timestep_range").get<std::array<int, 2>>();
    r.loss_scale = j.at("loss_scale").get<double>();
    r.rescale_factor = j.at("rescale_factor").get<double>();
    r.want_residual = j.at("want_residual").get<bool>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& img : j.at("images")) r.images.push_back(decode_png(base64_decode(img.get<std::string>())));
    if (j.contains("cameras"))
      for (const auto& c : j["cameras"]) {
        Camera cam;
        cam.position = vec_from<Vec3>(c.at("position"));
        cam.look_at = vec_from<Vec3>(c.at("look_at"));
        cam.up = vec_from<Vec3>(c.at("up"));
        cam.fov_y = c.at("fov_y").get<double>();
        cam.width = c.at("width").get<int>();
        cam.height = c.at("height").get<int>();
        cam.near = c.at("near").get<double>();
        r.cameras.push_back(cam);
      }
    if (j.contains("candidate")) {
      const json& c = j["candidate"];
      InteractionParams p;
      p.anchor_id = c.at("anchor").get<std::string>();
      p.child_id = c.at("child").get<std::string>();
      p.rotation = vec_from<Quat>(c.at("rotation"));
      p.translation = vec_from<Vec3>(c.at("translation"));
      p.scale = c.at("scale").get<double>();
      p.status = InteractionStatus::Initialized;
      r.candidate = p;
    }
    return r;
  } catch (const json::exception& e) {
    throw OracleError(std::string("malformed guidance request: ") + e.what());
  } catch (const IoError& e) {
    throw OracleError(std::string("malformed guidance request: ") + e.what());
  }
}

json response_to_json(const OracleResponse& r) {
  json j{{"score", r.score}};
  if (!r.residuals.empty()) {
    json res = json::array();
    for (const Image& img : r.residuals)
      res.push_back({{"width", img.width}, {"height", img.height}, {"data", base64_encode(float_image_bytes(img))}});
    j["residuals"] = std::move(res);
  }
  return j;
}

OracleResponse response_from_json(const json& j) {
  try {
    OracleResponse r;
    r.score = j.at("score").get<double>();
    if (j.contains("residuals"))
      for (const auto& e : j["residuals"]) {
        Image img(e.at("width").get<int>(), e.at("height").get<int>());
        const std::string bytes = base64_decode(e.at("data").get<std::string>());
        if (bytes.size() != img.rgb.size() * sizeof(float)) throw OracleError("residual size does not match its shape");
        for (std::size_t i = 0; i < img.rgb.size(); ++i) {
          float f;
          std::memcpy(&f, bytes.data() + i * sizeof f, sizeof f);
          img.rgb[i] = f;
        }
        r.residuals.push_back(std::move(img));
      }
    return r;
  } catch (const json::exception& e) {
    throw OracleError(std::string("malformed guidance response: ") + e.what());
  } catch (const IoError& e) {
    throw OracleError(std::string("malformed guidance response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------------------------

struct HttpOracle::Impl {
  std::string host;  // scheme://host:port
  std::string path;
  HttpOracleOptions options;
  std::once_flag probed;
  bool residuals = false;
  unsigned concurrency = 1;

  httplib::Client client() const {
    httplib::Client c(host);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - secs);
    c.set_connection_timeout(secs.count(), usecs.count());
    c.set_read_timeout(secs.count(), usecs.count());
    c.set_write_timeout(secs.count(), usecs.count());
    return c;
  }

  // Runs `call` up to 1 + retries times; transport failures and 5xx are retried.
  template <class Call>
  std::string with_retries(Call call) const {
    std::string last = "no attempt made";
    for (int attempt = 0; attempt <= options.retries; ++attempt) {
      httplib::Client c = client();
      const httplib::Result res = call(c);
      if (!res) {
        last = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last = "service error " + std::to_string(res->status) + ": " + res->body;
        continue;
      }
      if (res->status != 200) throw OracleError("guidance service rejected the request (" +
                                                std::to_string(res->status) + "): " + res->body);
      return res->body;
    }
    throw OracleError("guidance service at " + host + path + " failed: " + last);
  }

  void probe() {
    std::call_once(probed, [this] {
      const std::string body = with_retries([this](httplib::Client& c) { return c.Get(path); });
      try {
        const json j = json::parse(body);
        residuals = j.at("residuals").get<bool>();
        concurrency = std::max(1u, std::min(j.value("concurrency", 1u), options.concurrency));
      } catch (const json::exception& e) {
        throw OracleError(std::string("malformed capability response: ") + e.what());
      }
    });
  }
};

HttpOracle::HttpOracle(const std::string& url, HttpOracleOptions options) : impl_(std::make_unique<Impl>()) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0)
    throw ValidationError("guidance url must start with http:// (got '" + url + "')");
  const auto slash = url.find('/', scheme + 3);
  impl_->host = url.substr(0, slash);
  impl_->path = slash == std::string::npos ? "/" : url.substr(slash);
  impl_->options = options;
}

HttpOracle::~HttpOracle() = default;

OracleCapability HttpOracle::capability() const {
  impl_->probe();
  return impl_->residuals ? OracleCapability::ScoreAndResidual : OracleCapability::ScoreOnly;
}

unsigned HttpOracle::concurrency_limit() const {
  impl_->probe();
  return impl_->concurrency;
}

OracleResponse HttpOracle::evaluate(const OracleRequest& request) {
  if (request.want_residual) require_residuals(*this);
  const std::string payload = request_to_json(request).dump();
  const std::string body = impl_->with_retries(
      [&](httplib::Client& c) { return c.Post(impl_->path, payload, "application/json"); });
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw OracleError(std::string("guidance response is not JSON: ") + e.what());
  }
  OracleResponse r = response_from_json(j);
  if (request.want_residual && r.residuals.size() != request.images.size())
    throw CapabilityError("guidance service returned " + std::to_string(r.residuals.size()) + " residuals for " +
                          std::to_string(request.images.size()) + " views");
  for (std::size_t i = 0; i < r.residuals.size(); ++i)
    if (!r.residuals[i].same_shape(request.images[i])) throw OracleError("residual shape does not match its view");
  return r;
}

// ---------------------------------------------------------------------------------------------

struct OracleServer::Impl {
  httplib::Server server;
  std::thread thread;
  std::mutex serial;
  std::atomic<std::size_t> requests{0};
};

OracleServer::OracleServer(GuidanceOracle& oracle, int port) : impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;
  Impl* impl = impl_.get();
  srv.Get("/", [&oracle](const httplib::Request&, httplib::Response& res) {
    const json j{{"residuals", oracle.has_residuals()}, {"concurrency", oracle.concurrency_limit()}};
    res.set_content(j.dump(), "application/json");
  });
  srv.Post("/", [&oracle, impl](const httplib::Request& req, httplib::Response& res) {
    impl->requests.fetch_add(1);
    try {
      const OracleRequest r = request_from_json(json::parse(req.body));
      OracleResponse out;
      if (oracle.concurrency_limit() <= 1) {
        std::lock_guard lock(impl->serial);
        out = oracle.evaluate(r);
      } else {
        out = oracle.evaluate(r);
      }
      res.set_content(response_to_json(out).dump(), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(e.what(), "text/plain");
    } catch (const CapabilityError& e) {
      res.status = 400;
      res.set_content(e.what(), "text/plain");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(e.what(), "text/plain");
    }
  });
  port_ = port == 0 ? srv.bind_to_any_port("127.0.0.1") : (srv.bind_to_port("127.0.0.1", port) ? port : -1);
  if (port_ <= 0) throw IoError("cannot bind the oracle server");
  impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
}

OracleServer::~OracleServer() { stop(); }

std::string OracleServer::url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/"; }

std::size_t OracleServer::requests() const { return impl_->requests.load(); }

void OracleServer::stop() {
  if (impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

}  // namespace cg3d::io
