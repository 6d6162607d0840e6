#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "streamkit/common.hpp"

namespace streamkit {

// Runs one entity over real UDP sockets with wall clocks until stopped.
// Virtual-time experiments never come through here; this is the
// multi-process demo path. Each role writes its CSV shards into its
// configured out_dir on shutdown.
class RoleRunner {
 public:
  // ConfigError on unknown role or bad config; IoError when a port cannot
  // be bound.
  RoleRunner(const std::string& role, const std::string& config_path);
  ~RoleRunner();

  RoleRunner(const RoleRunner&) = delete;
  RoleRunner& operator=(const RoleRunner&) = delete;

  // Blocks. Throws RecoveryTimeout if the receiver never reaches a server.
  void run();

  // Safe to call from a signal handler.
  void request_stop() { stop_.store(true); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<bool> stop_{false};
};

}  // namespace streamkit
