#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "sdl/dataset.hpp"

using namespace sdl;

TEST(Dataset, ReadsFramesAndInternsNames) {
  Dataset ds = fixtures::dataset_from({fixtures::clear_frame("a", 0), fixtures::clear_frame("b", 0, false)});
  ASSERT_EQ(ds.frames.size(), 2u);
  EXPECT_EQ(ds.episodes, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.frame_id(1), "b:0");
  auto speed = ds.schema.frame_features.find("speed");
  ASSERT_TRUE(speed);
  EXPECT_EQ(ds.frames[0].feature(*speed), 90);
  auto area = ds.schema.object_features.find("area");
  EXPECT_EQ(ds.frames[0].object_feature(1, *area), 15);
  EXPECT_FALSE(ds.frames[1].label);
  EXPECT_EQ(ds.frames[0].mask(0)->width(), 16);
  EXPECT_TRUE(std::isnan(ds.frames[0].feature(99)));
}

TEST(Dataset, NumericEpisodeIdsAccepted) {
  auto f = fixtures::clear_frame("x", 3);
  f["episode"] = 17;
  Dataset ds = fixtures::dataset_from({f});
  EXPECT_EQ(ds.frame_id(0), "17:3");
}

TEST(Dataset, ErrorsCarryLineNumbers) {
  std::istringstream in(fixtures::clear_frame("a", 0).dump() + "\n\n{\"episode\": \"a\"}\n");
  try {
    read_dataset(in, "frames.jsonl");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("frames.jsonl:3"), std::string::npos) << e.what();
  }
}

TEST(Dataset, MaskRunLengthRoundTrip) {
  std::vector<std::uint8_t> bits{0, 1, 1, 0, 1, 1, 1, 1, 0, 0, 0, 0, 1, 0, 0, 1};
  MaskGrid m(4, 4, bits);
  auto rows = encode_mask_rows(m);
  EXPECT_EQ(rows[0].dump(), "[1,2,1]");
  EXPECT_EQ(rows[1].dump(), "[0,4]");
  EXPECT_EQ(rows[2].dump(), "[4]");
  nlohmann::json j = {{"w", 4}, {"h", 4}, {"bits", nlohmann::json::parse(rows.dump())}};
  EXPECT_EQ(decode_mask(j), m);
}

TEST(Dataset, MaskRowsMustCoverWidth) {
  nlohmann::json j = {{"w", 4}, {"h", 1}, {"bits", {{1, 2}}}};
  EXPECT_THROW(decode_mask(j), InputError);
  j["bits"] = {{3, 3}};
  EXPECT_THROW(decode_mask(j), InputError);
}

TEST(Dataset, WriteReadRoundTripIsByteStable) {
  auto f = fixtures::clear_frame("a", 0);
  f["masks"]["glare"]["bits"][3] = {2, 5, 9};
  f["features"]["speed"] = 12.345;
  Dataset ds = fixtures::dataset_from({f, fixtures::clear_frame("a", 1)});
  std::ostringstream a;
  write_dataset(a, ds);
  std::istringstream in(a.str());
  Dataset again = read_dataset(in);
  std::ostringstream b;
  write_dataset(b, again);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(again.frames[0].masks[0].total(), 5u);
}
