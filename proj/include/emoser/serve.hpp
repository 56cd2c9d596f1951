#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <string_view>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "emoser/audio.hpp"
#include "emoser/error.hpp"
#include "emoser/models.hpp"
#include "emoser/ravdess.hpp"

namespace emoser::serve {

inline constexpr std::size_t kMaxBodyBytes = 10u * 1024u * 1024u;

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

inline HttpReply error_reply(int status, std::string_view code, std::string_view message) {
  return {status, nlohmann::json{{"error", code}, {"message", message}}.dump()};
}

/// HTTP front end over one immutable model: /api/health, /api/labels,
/// /api/predict (raw WAV body), plus static files for the web demo.
class InferenceService {
 public:
  explicit InferenceService(Model model) : model_(std::move(model)) {
    server_.set_payload_max_length(kMaxBodyBytes);
    server_.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    server_.Get("/api/labels", [this](const httplib::Request&, httplib::Response& res) { send(res, labels()); });
    server_.Post("/api/predict", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, predict(req.body));
    });
    server_.set_exception_handler([this](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
      send(res, internal_error());
    });
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      const auto reply = res.status == 413 ? error_reply(413, "payload_too_large", "request body exceeds 10 MiB")
                                           : error_reply(res.status, "http_error", httplib::status_message(res.status));
      res.set_content(reply.body, reply.content_type);
    });
  }

  static InferenceService from_checkpoint(const std::filesystem::path& path) {
    try {
      return InferenceService(load_checkpoint(path));
    } catch (const Error& e) {
      fail(Errc::CheckpointLoadError, e.what());
    }
  }

  InferenceService(const InferenceService&) = delete;
  InferenceService& operator=(const InferenceService&) = delete;
  InferenceService(InferenceService&& other) noexcept : InferenceService(std::move(other.model_)) {}

  const Model& model() const { return model_; }

  HttpReply health() const {
    return {200, nlohmann::json{{"status", "ok"}, {"model_id", model_.id()}}.dump()};
  }

  HttpReply labels() const {
    nlohmann::json names = nlohmann::json::array();
    for (std::size_t k = 0; k < model_.spec().num_classes; ++k) names.push_back(class_name(k, model_.spec().num_classes));
    return {200, names.dump()};
  }

  /// 400 unsupported_format for non-WAV or non-PCM16 bodies, 400 malformed_wav
  /// for broken RIFF structure, 413 above 10 MiB, 500 with an opaque id
  /// otherwise.
  HttpReply predict(std::string_view body) const {
    if (body.size() > kMaxBodyBytes) return error_reply(413, "payload_too_large", "request body exceeds 10 MiB");
    if (body.size() < 12 || body.substr(0, 4) != "RIFF" || body.substr(8, 4) != "WAVE") {
      return error_reply(400, "unsupported_format", "request body is not a RIFF/WAVE file");
    }
    try {
      const auto clip = read_wav({reinterpret_cast<const std::uint8_t*>(body.data()), body.size()});
      return {200, to_json(emoser::predict(model_, clip)).dump()};
    } catch (const Error& e) {
      switch (e.code()) {
        case Errc::UnsupportedFormat: return error_reply(400, "unsupported_format", e.what());
        case Errc::MalformedRiff:
        case Errc::EmptyAudio: return error_reply(400, "malformed_wav", e.what());
        default: return internal_error();
      }
    } catch (...) {
      return internal_error();
    }
  }

  void mount_static(const std::filesystem::path& dir) {
    if (!server_.set_mount_point("/", dir.string())) {
      fail(Errc::InvalidArgument, "static directory " + dir.string() + " does not exist");
    }
  }

  void bind(const std::string& host, int port) {
    if (!server_.bind_to_port(host, port)) {
      fail(Errc::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
    }
  }

  /// Binds an ephemeral port and returns it.
  int bind_any(const std::string& host) {
    const int port = server_.bind_to_any_port(host);
    if (port < 0) fail(Errc::BindFailure, "cannot bind any port on " + host);
    return port;
  }

  /// Blocks serving requests until stop().
  void listen() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static void send(httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  }

  HttpReply internal_error() const {
    char id[24];
    std::snprintf(id, sizeof id, "err-%06llx", static_cast<unsigned long long>(++error_counter_));
    return {500, nlohmann::json{{"error", "internal"}, {"id", id}}.dump()};
  }

  Model model_;
  httplib::Server server_;
  mutable std::atomic<std::uint64_t> error_counter_{0};
};

/// Splits "host:port"; a bare port binds 127.0.0.1.
inline std::pair<std::string, int> parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  std::string host = colon == std::string::npos ? "127.0.0.1" : addr.substr(0, colon);
  const std::string port = colon == std::string::npos ? addr : addr.substr(colon + 1);
  if (host.empty()) host = "0.0.0.0";
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range("port");
    return {host, p};
  } catch (const std::exception&) {
    fail(Errc::InvalidArgument, "bad address \"" + addr + "\" (expected host:port)");
  }
}

}  // namespace emoser::serve
