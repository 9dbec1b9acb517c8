#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "sdl/manifest.hpp"

using namespace sdl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("sdl_manifest_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void put(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(Manifest, JsonRoundTrip) {
  auto d = scratch("rt");
  put(d / "net.json", "{}");
  RunManifest m;
  m.command = "tune";
  m.add_input("network", (d / "net.json").string());
  m.seed = 42;
  m.parameters["max_rounds"] = 3;
  auto back = manifest_from_json(manifest_to_json(m));
  EXPECT_EQ(back.command, "tune");
  EXPECT_EQ(back.inputs, m.inputs);
  EXPECT_EQ(back.seed, m.seed);
  EXPECT_EQ(back.parameters, m.parameters);
  EXPECT_EQ(back.output_directory, ".");
  EXPECT_EQ(back.inputs["network"].digest, fnv1a_hex("{}"));
}

TEST(Manifest, SameInputsSameBytes) {
  auto d = scratch("bytes");
  put(d / "data.jsonl", "x\n");
  RunManifest a, b;
  a.command = b.command = "eval";
  a.add_input("dataset", (d / "data.jsonl").string());
  b.add_input("dataset", (d / "data.jsonl").string());
  fs::create_directories(d / "o1");
  fs::create_directories(d / "o2");
  write_manifest(d / "o1", a);
  write_manifest(d / "o2", b);
  EXPECT_EQ(read_file((d / "o1" / kManifestName).string()), read_file((d / "o2" / kManifestName).string()));
}

TEST(Manifest, DetectsChangedOrMissingInputs) {
  auto d = scratch("stale");
  put(d / "a", "1");
  put(d / "b", "2");
  RunManifest m;
  m.command = "eval";
  m.add_input("network", (d / "a").string());
  m.add_input("dataset", (d / "b").string());
  EXPECT_TRUE(stale_inputs(m).empty());
  put(d / "a", "changed");
  fs::remove(d / "b");
  EXPECT_EQ(stale_inputs(m).size(), 2u);
}

TEST(Manifest, MalformedIsAnInputError) {
  EXPECT_THROW(manifest_from_json(nlohmann::ordered_json{{"command", "eval"}}), InputError);
  auto d = scratch("bad");
  put(d / "m.json", "{not json");
  EXPECT_THROW(load_manifest((d / "m.json").string()), InputError);
  EXPECT_THROW(load_manifest((d / "missing.json").string()), InputError);
}
