#pragma once

// HTTP+JSON front end over a SessionStore.
//
//   GET  /sessions                      list ids
//   POST /sessions                      create   {lower, upper, noise_scale, acquisition, ...}
//   GET  /sessions/{id}                 state
//   POST /sessions/{id}/anchors         {points: [[...], ...]}
//   POST /sessions/{id}/freeze
//   GET  /sessions/{id}/duel            propose the next duel (409 while one is pending)
//   POST /sessions/{id}/preference      {winner: "challenger" | "reference"}
//   GET  /sessions/{id}/summary?grid=N
//   GET  /sessions/{id}/trace           CSV
//   POST /sessions/{id}/close
//
// Errors are {"code": ..., "message": ...} with status 400, 404, 409 or 410.

#include "hetpbo/session.hpp"

#include <memory>
#include <string>

namespace hetpbo {

class HttpService {
 public:
  explicit HttpService(SessionStore& store);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  bool serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hetpbo
