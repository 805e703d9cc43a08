#include <doctest.h>

#include <atomic>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "cg3d/errors.hpp"
#include "cg3d/forge.hpp"
#include "cg3d/io/edit.hpp"
#include "cg3d/io/files.hpp"
#include "cg3d/io/ply.hpp"
#include "cg3d/io/png.hpp"
#include "cg3d/io/scene_file.hpp"
#include "cg3d/io/wire.hpp"
#include "common/support.hpp"

// After Eigen: glibc's resolver header, pulled in here, defines a macro named _res.
#include <httplib.h>

namespace fs = std::filesystem;
using namespace cg3d;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> n{0};
    path = fs::temp_directory_path() / ("cg3d_io_test_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

bool bit_identical(std::span<const Gaussian> a, std::span<const Gaussian> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Gaussian &x = a[i], &y = b[i];
    if (std::memcmp(x.mean.data(), y.mean.data(), sizeof(double) * 3) ||
        std::memcmp(x.rotation.data(), y.rotation.data(), sizeof(double) * 4) ||
        std::memcmp(x.scale.data(), y.scale.data(), sizeof(double) * 3) ||
        std::memcmp(&x.opacity, &y.opacity, sizeof(double)) ||
        std::memcmp(x.color.data(), y.color.data(), sizeof(double) * 3))
      return false;
  }
  return true;
}

Image random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h);
  for (auto& v : img.rgb) v = u(rng);
  return img;
}

// The three-object example: a chicken on a plate on a table.
json table_example() {
  return json::parse(R"({
    "objects": [
      {"id": "chicken", "prompt": "photo of a roasted chicken", "gaussians_path": "chicken.ply"},
      {"id": "plate", "prompt": "photo of a plain white plate", "gaussians_path": "plate.ply"},
      {"id": "table", "prompt": "photo of a wooden table", "gaussians_path": "table.ply"}
    ],
    "interactions": [
      {"anchor": "plate", "child": "chicken", "prompt": "roasted chicken on a plate"},
      {"anchor": "table", "child": "plate", "prompt": "a plate on a table"}
    ]
  })");
}

std::string schema_pointer(const json& doc, const fs::path& base, io::MissingFiles m = io::MissingFiles::Allow) {
  try {
    io::parse_scene(doc, base, m);
  } catch (const SchemaError& e) {
    return e.pointer();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("base64 matches the RFC 4648 vectors and round-trips") {
  const std::pair<const char*, const char*> vectors[] = {{"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},
                                                         {"foo", "Zm9v"},   {"foob", "Zm9vYg=="},  {"fooba", "Zm9vYmE="},
                                                         {"foobar", "Zm9vYmFy"}};
  for (const auto& [plain, enc] : vectors) {
    CHECK(io::base64_encode(plain) == enc);
    CHECK(io::base64_decode(enc) == plain);
  }
  std::string bytes(1000, '\0');
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(i * 37 % 256);
  CHECK(io::base64_decode(io::base64_encode(bytes)) == bytes);
  CHECK_THROWS_AS(io::base64_decode("abc"), IoError);
  CHECK_THROWS_AS(io::base64_decode("ab$="), IoError);
}

TEST_CASE("atomic writes replace the file and leave no temporaries") {
  TempDir dir;
  const fs::path p = dir.path / "scene.json";
  io::write_file_atomic(p, "first");
  io::write_file_atomic(p, "second, longer");
  CHECK(io::read_file(p) == "second, longer");
  CHECK(std::distance(fs::directory_iterator(dir.path), fs::directory_iterator{}) == 1);
  CHECK_THROWS_AS(io::write_file_atomic(dir.path / "missing" / "x", "data"), IoError);
}

TEST_CASE("PNG round-trips 8-bit values exactly") {
  std::mt19937_64 rng(4);
  Image img = random_image(rng, 13, 7);
  for (auto& v : img.rgb) v = std::round(v * 255.0) / 255.0;
  const Image back = io::decode_png(io::encode_png(img));
  REQUIRE(back.same_shape(img));
  CHECK(back.rgb == img.rgb);
  CHECK_THROWS_AS(io::decode_png("not a png"), IoError);
}

TEST_CASE("Gaussian PLY round-trip") {
  std::mt19937_64 rng(5);
  const auto gs = testing::random_gaussians(rng, 200);
  const std::string bytes = io::encode_gaussian_ply(gs);
  const auto back = io::decode_gaussian_ply(bytes);
  REQUIRE(back.size() == gs.size());
  for (std::size_t i = 0; i < gs.size(); ++i) {
    CHECK((back[i].mean - gs[i].mean).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(((back[i].scale - gs[i].scale).array() / gs[i].scale.array()).abs().maxCoeff() <= 1e-6);
    CHECK((back[i].rotation - gs[i].rotation).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(std::abs(back[i].opacity - gs[i].opacity) <= 1e-6);
    CHECK((back[i].color - gs[i].color).cwiseAbs().maxCoeff() <= 1e-6);
  }
  // A second trip through float32 changes nothing.
  CHECK(io::encode_gaussian_ply(back) == bytes);
  CHECK_THROWS_AS(io::decode_gaussian_ply(bytes.substr(0, bytes.size() - 3)), IoError);
  CHECK_THROWS_AS(io::decode_gaussian_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n"),
                  IoError);
}

TEST_CASE("point clouds from xyz text and PLY") {
  TempDir dir;
  write_text(dir.path / "a.xyz", "# comment\n0 1 2\n\n3.5 -4 5e-1\n");
  CHECK(io::read_points(dir.path / "a.xyz") == std::vector<Vec3>{Vec3(0, 1, 2), Vec3(3.5, -4, 0.5)});
  write_text(dir.path / "bad.xyz", "1 2\n");
  CHECK_THROWS_AS(io::read_points(dir.path / "bad.xyz"), IoError);

  write_text(dir.path / "a.ply",
             "ply\nformat ascii 1.0\nelement vertex 2\nproperty uchar red\nproperty double z\nproperty float y\n"
             "property float x\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
             "255 3 2 1\n0 6 5 4\n3 0 1 1\n");
  CHECK(io::read_points(dir.path / "a.ply") == std::vector<Vec3>{Vec3(1, 2, 3), Vec3(4, 5, 6)});

  // Binary with a face element in front of the vertices and a list property to skip.
  std::string bin = "ply\nformat binary_little_endian 1.0\nelement face 1\nproperty list uchar int idx\n"
                    "element vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  const unsigned char n = 2;
  const std::int32_t idx[2] = {7, 8};
  const float xyz[3] = {0.25f, -1.5f, 3.0f};
  bin.append(reinterpret_cast<const char*>(&n), 1);
  bin.append(reinterpret_cast<const char*>(idx), sizeof idx);
  bin.append(reinterpret_cast<const char*>(xyz), sizeof xyz);
  write_text(dir.path / "b.ply", bin);
  CHECK(io::read_points(dir.path / "b.ply") == std::vector<Vec3>{Vec3(0.25, -1.5, 3.0)});
}

TEST_CASE("scene schema") {
  TempDir dir;
  SUBCASE("the three-object example parses into 3 objects and 2 interactions") {
    const auto doc = io::parse_scene(table_example(), dir.path, io::MissingFiles::Allow);
    CHECK(doc.scene.objects.size() == 3);
    CHECK(doc.scene.interactions.size() == 2);
    CHECK(doc.entry("plate").prompt == "photo of a plain white plate");
    const auto order = doc.scene.ancestral_order();
    REQUIRE(order.size() == 2);
    CHECK(doc.scene.interactions[order[0]].anchor_id == "table");
    CHECK(doc.scene.interactions[order[1]].anchor_id == "plate");
    for (const auto& p : doc.scene.interactions) CHECK(p.status == InteractionStatus::Unset);
  }
  SUBCASE("missing PLY files are an error unless allowed") {
    CHECK(schema_pointer(table_example(), dir.path, io::MissingFiles::Error) == "/objects/0/gaussians_path");
  }
  SUBCASE("errors carry JSON pointers") {
    json d = table_example();
    d["objects"] = json::array();
    CHECK(schema_pointer(d, dir.path) == "/objects");

    d = table_example();
    d.erase("objects");
    CHECK(schema_pointer(d, dir.path) == "/objects");

    d = table_example();
    d["objects"][1].erase("prompt");
    CHECK(schema_pointer(d, dir.path) == "/objects/1/prompt");

    d = table_example();
    d["objects"][2]["colour"] = "red";
    CHECK(schema_pointer(d, dir.path) == "/objects/2/colour");

    d = table_example();
    d["objects"][2]["id"] = "plate";
    CHECK(schema_pointer(d, dir.path) == "/objects/2/id");

    d = table_example();
    d["interactions"][1]["anchor"] = "lamp";
    CHECK(schema_pointer(d, dir.path) == "/interactions/1/anchor");

    d = table_example();
    d["interactions"][0]["params"] = {{"rotation", {1, 0, 0, 0}}, {"translation", {0, "up", 0}}, {"scale", 1}};
    CHECK(schema_pointer(d, dir.path) == "/interactions/0/params/translation/1");

    d = table_example();
    d["interactions"][0]["status"] = "done";
    CHECK(schema_pointer(d, dir.path) == "/interactions/0/status");

    d = table_example();
    d["interactions"][0]["status"] = "settled";
    CHECK(schema_pointer(d, dir.path) == "/interactions/0/params");

    d = table_example();
    d["interactions"].push_back({{"anchor", "chicken"}, {"child", "table"}, {"prompt", "loop"}});
    CHECK(schema_pointer(d, dir.path) == "/interactions");

    d = table_example();
    d["config"] = {{"physics", {{"steps", "many"}}}};
    CHECK(schema_pointer(d, dir.path) == "/config/physics/steps");

    d = table_example();
    d["config"] = {{"forge", {{"warp_factor", 9}}}};
    CHECK(schema_pointer(d, dir.path) == "/config/forge/warp_factor");

    d = table_example();
    d["config"] = {{"init", {{"joint_samples", -5}}}};
    CHECK(schema_pointer(d, dir.path) == "/config/init");
  }
  SUBCASE("config overrides apply by name") {
    json d = table_example();
    d["config"] = {{"physics", {{"steps", 50}, {"contact_mode", "negative_cosine"}}},
                   {"forge", {{"iterations", 10}, {"fov_range", {20, 40}}}},
                   {"init", {{"camera_azimuths", {0, 180}}}}};
    const auto doc = io::parse_scene(d, dir.path, io::MissingFiles::Allow);
    CHECK(doc.physics.steps == 50);
    CHECK(doc.physics.contact_mode == ContactLossMode::NegativeCosine);
    CHECK(doc.forge.iterations == 10);
    CHECK(doc.forge.fov_range == std::array<double, 2>{20, 40});
    CHECK(doc.init.camera_azimuths == std::vector<double>{0, 180});
    CHECK(doc.init.joint_samples == 150);
  }
}

TEST_CASE("a settled two-object scene round-trips bit-stably") {
  TempDir dir;
  io::SceneDocument doc;
  doc.base_dir = dir.path;
  doc.entries = {{"plate", "a plate", "plate.ply", std::nullopt, false},
                 {"ball", "a ball", "objects/ball.ply", std::string("ball.xyz"), true}};
  fs::create_directories(dir.path / "objects");
  doc.scene.objects.emplace("plate", testing::sphere_shell("plate", 300, 1.0, Vec3::Zero(), 0.05));
  doc.scene.objects.emplace("ball", testing::sphere_shell("ball", 200, 0.3, Vec3(0.1, 0.2, 0.3)));
  InteractionParams p;
  p.anchor_id = "plate";
  p.child_id = "ball";
  p.prompt = "a ball on a plate";
  p.rotation = Quat(std::cos(0.3), 0.0, std::sin(0.3), 0.0);
  p.translation = Vec3(0.1 / 3.0, 1.0 / 7.0, -2.0 / 9.0);
  p.scale = 0.4567;
  p.status = InteractionStatus::Settled;
  doc.scene.interactions.push_back(p);
  doc.config = {{"physics", {{"steps", 120}}}};
  write_text(dir.path / "ball.xyz", "0 0 0\n");

  const fs::path a = dir.path / "scene.json", b = dir.path / "copy" / "scene.json";
  io::store_scene(doc, a);
  const auto loaded = io::load_scene(a);
  CHECK(loaded.physics.steps == 120);
  const InteractionParams& q = loaded.scene.interactions.at(0);
  CHECK(q.status == InteractionStatus::Settled);
  CHECK(q.translation == p.translation);
  CHECK(q.rotation == p.rotation);
  CHECK(q.scale == p.scale);
  CHECK(loaded.entry("ball").use_pointe_knn);

  fs::create_directories(b.parent_path() / "objects");
  write_text(b.parent_path() / "ball.xyz", "0 0 0\n");
  io::store_scene(loaded, b);
  CHECK(io::read_file(a) == io::read_file(b));
  CHECK(io::read_file(dir.path / "plate.ply") == io::read_file(b.parent_path() / "plate.ply"));
  CHECK(io::read_file(dir.path / "objects/ball.ply") == io::read_file(b.parent_path() / "objects/ball.ply"));
  const auto again = io::load_scene(b);
  CHECK(bit_identical(again.scene.object("ball").gaussians(), loaded.scene.object("ball").gaussians()));
}

TEST_CASE("wire messages") {
  std::mt19937_64 rng(6);
  OracleRequest r;
  r.prompt = "a plate on a table";
  r.view_suffix = "side view";
  for (int i = 0; i < 8; ++i) r.images.push_back(random_image(rng, 9, 5));
  r.timestep_range = {2, 700};
  r.want_residual = true;
  r.seed = 0xfeedfacecafebeefULL;
  r.cameras.push_back(orbit_camera(Vec3(0.1, 0.2, 0.3), 2.5, 30, 40, 45, 9, 5));
  InteractionParams c;
  c.anchor_id = "a";
  c.child_id = "b";
  c.translation = Vec3(1.0 / 3.0, 0.2, -0.7);
  c.scale = 0.123456789;
  r.candidate = c;

  const json j = io::request_to_json(r);
  CHECK(j["images"].size() == 8);
  const OracleRequest back = io::request_from_json(json::parse(j.dump()));
  CHECK(back.prompt == r.prompt);
  CHECK(back.view_suffix == r.view_suffix);
  CHECK(back.timestep_range == r.timestep_range);
  CHECK(back.seed == r.seed);
  CHECK(back.want_residual);
  REQUIRE(back.images.size() == 8);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t k = 0; k < r.images[i].rgb.size(); ++k)
      CHECK(std::abs(back.images[i].rgb[k] - r.images[i].rgb[k]) <= 0.5 / 255.0 + 1e-12);
  REQUIRE(back.cameras.size() == 1);
  CHECK(back.cameras[0].position == r.cameras[0].position);
  REQUIRE(back.candidate.has_value());
  CHECK(back.candidate->translation == c.translation);
  CHECK(back.candidate->scale == c.scale);

  OracleResponse res;
  res.score = 1.0 / 3.0;
  res.residuals.push_back(random_image(rng, 4, 3));
  const OracleResponse res2 = io::response_from_json(json::parse(io::response_to_json(res).dump()));
  CHECK(res2.score == res.score);
  REQUIRE(res2.residuals.size() == 1);
  for (std::size_t k = 0; k < res.residuals[0].rgb.size(); ++k)
    CHECK(res2.residuals[0].rgb[k] == static_cast<double>(static_cast<float>(res.residuals[0].rgb[k])));

  CHECK_THROWS_AS(io::response_from_json(json{{"scores", 1}}), OracleError);
  CHECK_THROWS_AS(io::request_from_json(json{{"prompt", 3}}), OracleError);
}

namespace {

OracleRequest clf_request(std::uint64_t seed, const Vec3& t, double s) {
  OracleRequest r;
  r.prompt = "a ball on a plate";
  r.seed = seed;
  r.images.push_back(Image(4, 4, 0.5));
  InteractionParams p;
  p.anchor_id = "plate";
  p.child_id = "ball";
  p.translation = t;
  p.scale = s;
  r.candidate = p;
  return r;
}

// A bare HTTP service whose POST handler is scripted by the test.
struct ScriptedService {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> posts{0};

  template <class Handler>
  ScriptedService(bool residuals, Handler handler) {
    server.Get("/", [residuals](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"residuals", residuals}, {"concurrency", 2}}.dump(), "application/json");
    });
    server.Post("/", [this, handler](const httplib::Request& req, httplib::Response& res) {
      handler(posts.fetch_add(1), req, res);
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~ScriptedService() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/"; }
};

}  // namespace

TEST_CASE("an in-process oracle behind HTTP behaves exactly like direct calls") {
  SyntheticClf direct(Vec3(0.1, 0.5, -0.2), 0.4, 0.05, 11);
  SyntheticClf served(Vec3(0.1, 0.5, -0.2), 0.4, 0.05, 11);
  io::OracleServer server(served);
  io::HttpOracle client(server.url());
  CHECK(client.capability() == OracleCapability::ScoreOnly);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const OracleRequest r = clf_request(rng(), Vec3(u(rng), u(rng), u(rng)), 0.5 + 0.2 * u(rng));
    const double a = direct.evaluate(r).score, b = client.evaluate(r).score;
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  }
  CHECK(server.requests() == 20);
}

TEST_CASE("photometric residuals over HTTP match direct calls up to PNG quantisation") {
  const ObjectField target = testing::sphere_shell("t", 200, 0.5, Vec3::Zero());
  PhotometricOracle direct(target), served(target);
  io::OracleServer server(served);
  io::HttpOracle client(server.url());
  CHECK(client.capability() == OracleCapability::ScoreAndResidual);
  OracleRequest r;
  r.prompt = "a ball";
  r.want_residual = true;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 3; ++i) {
    r.cameras.push_back(orbit_camera(Vec3::Zero(), 2.0, 120.0 * i, 20, 45, 16, 16));
    r.images.push_back(random_image(rng, 16, 16));
  }
  const OracleResponse a = direct.evaluate(r), b = client.evaluate(r);
  REQUIRE(b.residuals.size() == 3);
  for (std::size_t v = 0; v < 3; ++v)
    for (std::size_t k = 0; k < a.residuals[v].rgb.size(); ++k)
      CHECK(std::abs(a.residuals[v].rgb[k] - b.residuals[v].rgb[k]) <= r.loss_scale * 0.5 / 255.0 + 1e-6);
}

TEST_CASE("HTTP client: capability, retries, timeouts and malformed replies") {
  SUBCASE("residuals from a score-only service fail before anything is sent") {
    ScriptedService svc(false, [](int, const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"score": 1})", "application/json");
    });
    io::HttpOracle client(svc.url());
    OracleRequest r = clf_request(1, Vec3::Zero(), 0.5);
    r.want_residual = true;
    CHECK_THROWS_AS(client.evaluate(r), CapabilityError);
    const auto pts = testing::fibonacci_sphere(50, 0.5);
    ForgeConfig cfg;
    cfg.iterations = 3;
    CHECK_THROWS_AS(generate_object("a ball", pts, client, cfg), CapabilityError);
    CHECK(svc.posts == 0);
  }
  SUBCASE("two transient failures are retried") {
    ScriptedService svc(false, [](int n, const httplib::Request&, httplib::Response& res) {
      if (n < 2) {
        res.status = 503;
        return;
      }
      res.set_content(R"({"score": 0.25})", "application/json");
    });
    io::HttpOracle client(svc.url());
    CHECK(client.evaluate(clf_request(1, Vec3::Zero(), 0.5)).score == 0.25);
    CHECK(svc.posts == 3);
  }
  SUBCASE("a third failure gives up") {
    ScriptedService svc(false, [](int, const httplib::Request&, httplib::Response& res) { res.status = 500; });
    io::HttpOracle client(svc.url());
    CHECK_THROWS_AS(client.evaluate(clf_request(1, Vec3::Zero(), 0.5)), OracleError);
    CHECK(svc.posts == 3);
  }
  SUBCASE("slow replies time out") {
    ScriptedService svc(false, [](int, const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(400));
      res.set_content(R"({"score": 0.25})", "application/json");
    });
    io::HttpOracleOptions opts;
    opts.timeout = std::chrono::milliseconds(100);
    opts.retries = 0;
    io::HttpOracle client(svc.url(), opts);
    CHECK_THROWS_AS(client.evaluate(clf_request(1, Vec3::Zero(), 0.5)), OracleError);
  }
  SUBCASE("malformed or short replies") {
    ScriptedService svc(true, [](int n, const httplib::Request&, httplib::Response& res) {
      res.set_content(n == 0 ? "not json" : R"({"score": 1, "residuals": []})", "application/json");
    });
    io::HttpOracle client(svc.url());
    OracleRequest r = clf_request(1, Vec3::Zero(), 0.5);
    CHECK_THROWS_AS(client.evaluate(r), OracleError);
    r.want_residual = true;
    CHECK_THROWS_AS(client.evaluate(r), CapabilityError);
  }
  SUBCASE("nothing listening") {
    int port = 0;
    {
      httplib::Server probe;
      port = probe.bind_to_any_port("127.0.0.1");
    }
    io::HttpOracleOptions opts;
    opts.timeout = std::chrono::milliseconds(200);
    io::HttpOracle client("http://127.0.0.1:" + std::to_string(port) + "/", opts);
    CHECK_THROWS_AS(client.capability(), OracleError);
  }
  CHECK_THROWS_AS(io::HttpOracle("ftp://example"), ValidationError);
}

namespace {

// Lamp on a stool, plant on a table, table and stool side by side on nothing.
Scene furniture() {
  Scene s;
  s.objects.emplace("table", testing::sphere_shell("table", 120, 1.0, Vec3::Zero()));
  s.objects.emplace("stool", testing::sphere_shell("stool", 80, 0.5, Vec3(2, 0, 0)));
  s.objects.emplace("lamp", testing::sphere_shell("lamp", 60, 0.3, Vec3(0, 1, 0)));
  s.objects.emplace("plant", testing::sphere_shell("plant", 60, 0.3, Vec3(0, 2, 0)));
  const auto add = [&](const char* a, const char* c, double y) {
    InteractionParams p;
    p.anchor_id = a;
    p.child_id = c;
    p.translation = Vec3(0, y, 0);
    p.scale = 0.5;
    p.status = InteractionStatus::Settled;
    s.interactions.push_back(p);
  };
  add("stool", "lamp", 0.6);
  add("table", "plant", 1.1);
  return s;
}

}  // namespace

TEST_CASE("scene edits") {
  const Scene before = furniture();
  SUBCASE("delete leaves the remaining objects bit-identical") {
    Scene s = before;
    edit_delete(s, "lamp");
    CHECK(s.objects.size() == 3);
    CHECK(s.interactions.size() == 1);
    for (const auto& [id, f] : s.objects) CHECK(bit_identical(f.gaussians(), before.object(id).gaussians()));
    CHECK_NOTHROW(flatten_scene(s));
    CHECK_THROWS_AS(edit_delete(s, "lamp"), SceneGraphError);
  }
  SUBCASE("deleting an anchor drops its interactions") {
    Scene s = before;
    edit_delete(s, "stool");
    CHECK(s.interactions.size() == 1);
    CHECK(s.interactions[0].child_id == "plant");
  }
  SUBCASE("move marks exactly one interaction Unset") {
    Scene s = before;
    edit_move(s, "plant", "stool", std::string("a plant on a stool"));
    int unset = 0;
    for (const auto& p : s.interactions) unset += p.status == InteractionStatus::Unset;
    CHECK(unset == 1);
    const auto& moved = s.interactions.at(s.interaction_index("stool", "plant"));
    CHECK(moved.status == InteractionStatus::Unset);
    CHECK(moved.prompt == "a plant on a stool");
    CHECK_THROWS_AS(s.interaction_index("table", "plant"), SceneGraphError);
    for (const auto& [id, f] : s.objects) CHECK(bit_identical(f.gaussians(), before.object(id).gaussians()));
  }
  SUBCASE("a move that would close a cycle is rejected and changes nothing") {
    Scene s = before;
    CHECK_THROWS_AS(edit_move(s, "stool", "lamp"), SceneGraphError);
    CHECK(s.interactions.size() == before.interactions.size());
    CHECK(s.interactions[0].anchor_id == "stool");
    CHECK_THROWS_AS(edit_move(s, "ghost", "table"), SceneGraphError);
  }
  SUBCASE("replace, then flattening before re-initialisation fails on the Unset interaction") {
    Scene s = before;
    edit_replace(s, "lamp", testing::sphere_shell("other", 40, 0.2, Vec3::Zero()));
    CHECK(s.object("lamp").id() == "lamp");
    CHECK(s.interactions[0].status == InteractionStatus::Unset);
    CHECK(s.interactions[1].status == InteractionStatus::Settled);
    CHECK(bit_identical(s.object("table").gaussians(), before.object("table").gaussians()));
    CHECK_THROWS_AS(flatten_scene(s), StatusError);
  }
}
