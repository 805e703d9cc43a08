#pragma once

#include <chrono>
#include <memory>
#include <string>

#include <json.hpp>

#include "cg3d/oracle.hpp"

namespace cg3d::io {

/// JSON body of a guidance request. Images travel as base64 PNG; the `cameras` and
/// `candidate` extensions are included when present.
nlohmann::json request_to_json(const OracleRequest& request);
OracleRequest request_from_json(const nlohmann::json& j);

/// Residuals travel as {width, height, data}: base64 of little-endian float32 RGB.
nlohmann::json response_to_json(const OracleResponse& response);
OracleResponse response_from_json(const nlohmann::json& j);

struct HttpOracleOptions {
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
  unsigned concurrency = 4;
};

/// Client for a guidance service at `url` (http://host[:port][/path]). Requests are POSTed to
/// the path; a GET on the same path reports {"residuals": bool, "concurrency": n}. Failed or
/// timed-out calls are retried, and the final failure raises OracleError.
class HttpOracle final : public GuidanceOracle {
 public:
  explicit HttpOracle(const std::string& url, HttpOracleOptions options = {});
  ~HttpOracle() override;

  OracleCapability capability() const override;
  unsigned concurrency_limit() const override;
  OracleResponse evaluate(const OracleRequest& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Serves an in-process oracle over the same protocol on 127.0.0.1. Used by tests and by
/// `cg3d serve`.
class OracleServer {
 public:
  /// `port` 0 picks a free port.
  OracleServer(GuidanceOracle& oracle, int port = 0);
  ~OracleServer();
  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;

  int port() const noexcept { return port_; }
  std::string url() const;
  /// Requests handled so far.
  std::size_t requests() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace cg3d::io
