#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "rope/external.hpp"
#include "rope/rng.hpp"

using namespace rope;

namespace {

std::vector<std::string> child_cmd(const std::string& mode = "normal",
                                   int dim = 4) {
  return {ROPE_CHILD_PATH, "--mode", mode, "--dim", std::to_string(dim)};
}

}  // namespace

TEST_CASE("round trip against the local closure") {
  const BlackBoxHandle h = connect_external(child_cmd());
  CHECK(h.dim() == 4);
  CHECK(h.kind() == "external");

  Rng rng(100);
  for (int i = 0; i < 1000; ++i) {
    Vec x(4);
    for (double& v : x) v = rng.uniform(-10.0, 10.0);
    const int expected = x[0] >= 0.0 ? 1 : 0;
    CHECK(h.query(x) == expected);
  }
}

TEST_CASE("batch equals pointwise queries") {
  const BlackBoxHandle h = connect_external(child_cmd());
  Rng rng(7);
  Matrix xs;
  for (int i = 0; i < 64; ++i)
    xs.push_back({rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()});
  const std::vector<int> batch = h.query_batch(xs);
  REQUIRE(batch.size() == xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(batch[i] == h.query(xs[i]));
}

TEST_CASE("malformed reply surfaces with the offending message") {
  const BlackBoxHandle h = connect_external(child_cmd("malformed"));
  try {
    h.query({1.0, 0.0, 0.0, 0.0});
    FAIL("expected an ExternalError");
  } catch (const ExternalError& e) {
    CHECK(e.kind() == ExternalError::Kind::malformed);
    CHECK(e.offending_message() == "this is not json");
  }
  // The channel stays usable for the next request (the child misbehaves
  // only once in this mode).
  CHECK(h.query({1.0, 0.0, 0.0, 0.0}) == 1);
}

TEST_CASE("id mismatch is a distinct protocol error") {
  const BlackBoxHandle h = connect_external(child_cmd("wrong-id"));
  try {
    h.query({-1.0, 0.0, 0.0, 0.0});
    FAIL("expected an ExternalError");
  } catch (const ExternalError& e) {
    CHECK(e.kind() == ExternalError::Kind::id_mismatch);
    CHECK(e.offending_message().find("999999") != std::string::npos);
  }
}

TEST_CASE("child death fails fast instead of hanging") {
  const BlackBoxHandle h = connect_external(child_cmd("die"));
  const auto start = std::chrono::steady_clock::now();
  try {
    h.query({0.5, 0.0, 0.0, 0.0});
    FAIL("expected an ExternalError");
  } catch (const ExternalError& e) {
    CHECK(e.kind() == ExternalError::Kind::child_exit);
  }
  const auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
      std::chrono::steady_clock::now() - start);
  CHECK(elapsed.count() < 10);
}

TEST_CASE("request timeout is enforced") {
  ExternalOptions opts;
  opts.timeout_ms = 300;
  const BlackBoxHandle h = connect_external(child_cmd("sleep"), opts);
  try {
    h.query({0.5, 0.0, 0.0, 0.0});
    FAIL("expected an ExternalError");
  } catch (const ExternalError& e) {
    CHECK(e.kind() == ExternalError::Kind::timeout);
  }
}

TEST_CASE("handshake failures are reported") {
  CHECK_THROWS_AS(connect_external(child_cmd("no-ready")), ExternalError);
  CHECK_THROWS_AS(connect_external({"/nonexistent/binary/path"}), ExternalError);
}

TEST_CASE("failed handshakes do not leak pipes or children") {
  const auto open_fds = [] {
    std::size_t count = 0;
    for ([[maybe_unused]] const auto& entry :
         std::filesystem::directory_iterator("/proc/self/fd"))
      ++count;
    return count;
  };
  const std::size_t before = open_fds();
  for (int i = 0; i < 20; ++i) {
    try {
      connect_external(child_cmd("no-ready"));
    } catch (const ExternalError&) {
    }
  }
  CHECK(open_fds() <= before + 2);
}
