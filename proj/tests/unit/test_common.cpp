#include <doctest.h>

#include <random>

#include "sciloop/common.hpp"
#include "sciloop/json_io.hpp"
#include "sciloop/process.hpp"
#include "support/test_support.hpp"

using namespace sciloop;

TEST_CASE("sha256_hex matches published digests") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("format_utc renders milliseconds") {
  CHECK(format_utc(0) == "1970-01-01T00:00:00.000Z");
  CHECK(format_utc(1735689600123) == "2025-01-01T00:00:00.123Z");
}

TEST_CASE("stepping clock advances by its step") {
  SteppingClock c(100, 7);
  CHECK(c.now_ms() == 100);
  CHECK(c.now_ms() == 107);
  CHECK(c.now_ms() == 114);
}

TEST_CASE("text helpers") {
  CHECK(trim("  a b \n") == "a b");
  CHECK(to_lower("MiXeD") == "mixed");
  CHECK(contains_icase("Periodic Fourier Features", "fourier"));
  CHECK_FALSE(contains_icase("abc", "abd"));
  CHECK(split_lines("a\nb\n") == std::vector<std::string>{"a", "b"});
  CHECK(split_lines("a\n\nb") == std::vector<std::string>{"a", "", "b"});
  CHECK(split_lines("").empty());
  CHECK(tokenize_words("Periodic PINN, Burgers!") ==
        std::vector<std::string>{"periodic", "pinn", "burgers"});
  CHECK(slugify("  Burgers: Viscous / PIML  ") == "burgers_viscous_piml");
  CHECK(slugify("***").empty());
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("abcde") == 2);
}

TEST_CASE("glob_match") {
  CHECK(glob_match("*.png", "summary_all.png"));
  CHECK_FALSE(glob_match("*.png", "summary_all.pngx"));
  CHECK(glob_match("v??", "v01"));
  CHECK(glob_match("[ab]*", "beta"));
  CHECK_FALSE(glob_match("[ab]*", "gamma"));
  CHECK(glob_match("*", ""));
}

TEST_CASE("base64_encode") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
}

TEST_CASE("file helpers create parents and replace atomically") {
  testsupport::TempDir tmp;
  const std::string p = tmp.sub("a/b/c.txt");
  write_file(p, "one");
  CHECK(read_file(p) == "one");
  write_file_atomic(p, "two");
  CHECK(read_file(p) == "two");
  CHECK_FALSE(std::filesystem::exists(p + ".tmp"));
  CHECK_THROWS_AS(read_file(tmp.sub("missing")), Error);
}

TEST_CASE("parse_embedded_json tolerates prose and fences") {
  CHECK(parse_embedded_json("{\"a\": 1}")["a"] == 1);
  CHECK(parse_embedded_json("Sure.\n```json\n{\"a\": [1, 2]}\n```\nDone.")["a"].size() == 2);
  CHECK(parse_embedded_json("result: [1, {\"b\": \"}\"}] trailing").is_array());
  CHECK_THROWS_AS(parse_embedded_json("no json here"), Json::parse_error);
}

TEST_CASE("typed field access names the key") {
  const Json j = Json::parse(R"({"s": "x", "n": 2.5, "i": 3, "l": ["a", "b"], "bad": 1})");
  CHECK(require_string(j, "s") == "x");
  CHECK(require_number(j, "n") == 2.5);
  CHECK(require_int(j, "i") == 3);
  CHECK(string_list(j, "l") == std::vector<std::string>{"a", "b"});
  CHECK(string_list(j, "absent").empty());
  try {
    require_string(j, "bad");
    FAIL("expected InvariantError");
  } catch (const InvariantError& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
  CHECK_THROWS_AS(require_int(j, "n"), InvariantError);
}

TEST_CASE("run_process captures output and enforces the timeout") {
  testsupport::TempDir tmp;
  ProcessSpec ok;
  ok.argv = {"sh", "-c", "echo hello; echo oops >&2; exit 3"};
  ok.cwd = tmp.path();
  ok.env = allowlisted_environment({"PATH"});
  ok.stdout_path = tmp.sub("out.log");
  ok.stderr_path = tmp.sub("err.log");
  const auto r = run_process(ok);
  CHECK(r.exit_code == 3);
  CHECK_FALSE(r.timed_out);
  CHECK(read_file(ok.stdout_path) == "hello\n");
  CHECK(read_file(ok.stderr_path) == "oops\n");

  ProcessSpec slow = ok;
  slow.argv = {"sh", "-c", "sleep 30"};
  slow.timeout_seconds = 0.5;
  const auto t = run_process(slow);
  CHECK(t.timed_out);
  CHECK(t.exit_code == kKilledExitCode);
  CHECK(t.duration_seconds < 2.5);

  ProcessSpec missing = ok;
  missing.argv = {"definitely-not-a-real-binary-xyz"};
  CHECK_THROWS_AS(run_process(missing), SpawnError);
}
