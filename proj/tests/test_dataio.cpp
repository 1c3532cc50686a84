#include "mcenet/dataio.hpp"
#include "mcenet/synthetic.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace mcenet;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path);
  out << content;
  return path;
}

SceneDataset uniform_track_dataset(int num_frames, double frame_rate = 10.0) {
  SceneDataset ds;
  ds.name = "t";
  ds.frame_rate = frame_rate;
  ds.frame_step = 1;
  AgentTrack track;
  track.agent_id = 1;
  track.agent_type = AgentType::kPedestrian;
  for (int f = 0; f < num_frames; ++f)
    track.points.push_back({f, 0.1 * f, 0.2 * f});
  ds.tracks.push_back(track);
  return ds;
}

}  // namespace

TEST_CASE("load_dataset parses grouped frame-sorted tracks") {
  const auto path = write_temp("mcenet_basic.txt",
                               "# comment line\n"
                               "1 7 0.0 0.0 pedestrian\n"
                               "0 7 1.0 2.0 Pedestrian\n"
                               "0 9 5.0 5.0 vehicle\n"
                               "1, 9, 6.0, 5.5, VEHICLE\n");
  const SceneDataset ds = load_dataset(path, "basic", 10.0);
  REQUIRE(ds.tracks.size() == 2);
  const AgentTrack* t7 = ds.find_track(7);
  REQUIRE(t7 != nullptr);
  CHECK(t7->agent_type == AgentType::kPedestrian);
  REQUIRE(t7->points.size() == 2);
  CHECK(t7->points[0].frame_id == 0);  // frame-sorted
  CHECK(t7->points[0].x == Catch::Approx(1.0));
  CHECK(ds.find_track(9)->agent_type == AgentType::kVehicle);
}

TEST_CASE("load_dataset rejects unknown type tokens, naming the row") {
  const auto path = write_temp("mcenet_badtype.txt",
                               "0 1 0 0 pedestrian\n"
                               "1 1 0 0 tram\n");
  try {
    load_dataset(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
    CHECK(std::string(e.what()).find("tram") != std::string::npos);
  }
}

TEST_CASE("load_dataset rejects duplicate (frame, agent) records") {
  const auto path = write_temp("mcenet_dup.txt",
                               "0 1 0 0 cyclist\n"
                               "0 1 1 1 cyclist\n");
  CHECK_THROWS_AS(load_dataset(path), ParseError);
}

TEST_CASE("dataset counts per type on an HBS-shaped file") {
  // same agent population shape as the HBS recording: 115 + 22 + 338 agents
  std::string content;
  int id = 0;
  auto add_agents = [&](int count, const char* type) {
    for (int i = 0; i < count; ++i) {
      ++id;
      for (int f = 0; f < 3; ++f)
        content += std::to_string(f) + " " + std::to_string(id) + " " + std::to_string(i) +
                   " 0.0 " + type + "\n";
    }
  };
  add_agents(115, "pedestrian");
  add_agents(22, "cyclist");
  add_agents(338, "vehicle");
  const auto path = write_temp("mcenet_hbs_shape.txt", content);
  const SceneDataset ds = load_dataset(path);
  int counts[3] = {0, 0, 0};
  for (const auto& t : ds.tracks) ++counts[static_cast<int>(t.agent_type)];
  CHECK(counts[0] == 115);
  CHECK(counts[1] == 22);
  CHECK(counts[2] == 338);
}

TEST_CASE("save and reload preserves the record set") {
  SyntheticSpec spec;
  spec.num_agents = 7;
  spec.num_frames = 9;
  const SceneDataset ds = make_synthetic_dataset(spec);
  const auto path = (std::filesystem::temp_directory_path() / "mcenet_roundtrip.txt").string();
  save_dataset(ds, path);
  const SceneDataset back = load_dataset(path, ds.name, ds.frame_rate);
  REQUIRE(back.tracks.size() == ds.tracks.size());
  for (const auto& t : ds.tracks) {
    const AgentTrack* other = back.find_track(t.agent_id);
    REQUIRE(other != nullptr);
    CHECK(other->agent_type == t.agent_type);
    REQUIRE(other->points.size() == t.points.size());
    for (std::size_t i = 0; i < t.points.size(); ++i) {
      CHECK(other->points[i].frame_id == t.points[i].frame_id);
      CHECK(other->points[i].x == Catch::Approx(t.points[i].x).margin(1e-9));
      CHECK(other->points[i].y == Catch::Approx(t.points[i].y).margin(1e-9));
    }
  }
}

TEST_CASE("resample keeps every stride-th frame from each track start") {
  const SceneDataset ds = uniform_track_dataset(20, 10.0);
  const SceneDataset out = resample(ds, 2.0);
  CHECK(out.frame_rate == Catch::Approx(2.0));
  CHECK(out.frame_step == 5);
  REQUIRE(out.tracks[0].points.size() == 4);  // ceil(20/5)
  CHECK(out.tracks[0].points[0].frame_id == 0);
  CHECK(out.tracks[0].points[1].frame_id == 5);
  CHECK(out.tracks[0].points[3].frame_id == 15);
}

TEST_CASE("resample at the same rate is the identity") {
  const SceneDataset ds = uniform_track_dataset(12, 2.0);
  const SceneDataset out = resample(ds, 2.0);
  REQUIRE(out.tracks[0].points.size() == 12);
  CHECK(out.frame_step == ds.frame_step);
}

TEST_CASE("resample rejects non-integer ratios") {
  const SceneDataset ds = uniform_track_dataset(10, 25.0);
  CHECK_THROWS_AS(resample(ds, 2.0), std::invalid_argument);
}

TEST_CASE("chronological_split puts the earliest fraction into test") {
  SceneDataset ds;
  ds.frame_rate = 2.0;
  ds.frame_step = 1;
  AgentTrack track;
  track.agent_id = 1;
  for (int f = 0; f < 100; ++f) track.points.push_back({f, 0.0, 0.0});
  ds.tracks.push_back(track);

  const SplitResult split = chronological_split(ds, 0.3);
  CHECK(split.boundary_frame == 30);
  REQUIRE(split.test.tracks.size() == 1);
  REQUIRE(split.train.tracks.size() == 1);
  CHECK(split.test.tracks[0].points.back().frame_id == 29);
  CHECK(split.train.tracks[0].points.front().frame_id == 30);
}

TEST_CASE("tracks spanning the boundary are truncated on both sides") {
  SceneDataset ds;
  ds.frame_rate = 2.0;
  ds.frame_step = 1;
  AgentTrack a;  // establishes the global range [0, 100)
  a.agent_id = 1;
  for (int f = 0; f < 100; ++f) a.points.push_back({f, 0.0, 0.0});
  AgentTrack b;  // spans the boundary at 30
  b.agent_id = 2;
  for (int f = 25; f <= 40; ++f) b.points.push_back({f, 1.0, 1.0});
  AgentTrack c;  // entirely before the boundary
  c.agent_id = 3;
  for (int f = 0; f <= 20; ++f) c.points.push_back({f, 2.0, 2.0});
  ds.tracks = {a, b, c};

  const SplitResult split = chronological_split(ds, 0.3);
  REQUIRE(split.boundary_frame == 30);
  const AgentTrack* b_test = split.test.find_track(2);
  const AgentTrack* b_train = split.train.find_track(2);
  REQUIRE(b_test != nullptr);
  REQUIRE(b_train != nullptr);
  CHECK(b_test->points.size() == 5);    // frames 25..29
  CHECK(b_train->points.size() == 11);  // frames 30..40
  CHECK(split.train.find_track(3) == nullptr);
  CHECK(split.test.find_track(3) != nullptr);

  // no window can straddle: every window comes from one side's sub-segment
  const auto test_windows = make_windows(split.test, 2, 1, 1);
  for (const auto& w : test_windows)
    CHECK(w.frame_at_step(2) < split.boundary_frame);
  const auto train_windows = make_windows(split.train, 2, 1, 1);
  for (const auto& w : train_windows) CHECK(w.start_frame >= split.boundary_frame);
}

TEST_CASE("make_windows emits one sample per run of T + T' frames") {
  CHECK(make_windows(uniform_track_dataset(16), 8, 8).size() == 1);
  CHECK(make_windows(uniform_track_dataset(15), 8, 8).empty());
  CHECK(make_windows(uniform_track_dataset(17), 8, 8).size() == 2);
}

TEST_CASE("window count matches floor((L - T - T') / stride) + 1") {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const int len = std::uniform_int_distribution<int>(1, 60)(rng);
    const int T = std::uniform_int_distribution<int>(2, 10)(rng);
    const int Tp = std::uniform_int_distribution<int>(1, 10)(rng);
    const int stride = std::uniform_int_distribution<int>(1, 4)(rng);
    const auto windows = make_windows(uniform_track_dataset(len), T, Tp, stride);
    const long expected = len >= T + Tp ? (len - T - Tp) / stride + 1 : 0;
    CHECK(static_cast<long>(windows.size()) == expected);
  }
}

TEST_CASE("windows carry offsets that reconstruct the positions") {
  const auto windows = make_windows(uniform_track_dataset(16), 8, 8);
  REQUIRE(windows.size() == 1);
  const TrainingSample& s = windows[0];
  REQUIRE(s.obs_offsets.rows() == 7);
  REQUIRE(s.fut_offsets.rows() == 8);

  const PointSeq obs_rec =
      offsets_to_positions(s.obs_positions.row(0).transpose(), s.obs_offsets);
  CHECK((obs_rec - s.obs_positions.bottomRows(7)).cwiseAbs().maxCoeff() < 1e-9);
  const PointSeq fut_rec = offsets_to_positions(s.last_obs_position(), s.fut_offsets);
  CHECK((fut_rec - s.fut_positions).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("tracks with frame gaps only produce windows inside contiguous runs") {
  SceneDataset ds;
  ds.frame_rate = 2.0;
  ds.frame_step = 1;
  AgentTrack t;
  t.agent_id = 1;
  for (int f = 0; f < 5; ++f) t.points.push_back({f, 0.0, 0.0});
  for (int f = 8; f < 13; ++f) t.points.push_back({f, 0.0, 0.0});  // gap 5..7
  ds.tracks.push_back(t);
  const auto windows = make_windows(ds, 3, 2, 1);
  CHECK(windows.size() == 2);  // one per 5-frame run
  for (const auto& w : windows) {
    const bool first_run = w.start_frame == 0;
    const bool second_run = w.start_frame == 8;
    CHECK((first_run || second_run));
  }
}

TEST_CASE("positions_to_offsets computes consecutive differences") {
  PointSeq p(3, 2);
  p << 0, 0, 1, 1, 2, 3;
  const PointSeq d = positions_to_offsets(p);
  REQUIRE(d.rows() == 2);
  CHECK(d(0, 0) == 1.0);
  CHECK(d(0, 1) == 1.0);
  CHECK(d(1, 0) == 1.0);
  CHECK(d(1, 1) == 2.0);

  PointSeq constant(4, 2);
  constant.setConstant(3.5);
  CHECK(positions_to_offsets(constant).cwiseAbs().maxCoeff() == 0.0);

  PointSeq single(1, 2);
  CHECK_THROWS_AS(positions_to_offsets(single), std::invalid_argument);
}

TEST_CASE("offsets round trip on random walks") {
  std::mt19937 rng(7);
  std::normal_distribution<double> step(0.0, 1.0);
  for (int walk = 0; walk < 100; ++walk) {
    const int len = std::uniform_int_distribution<int>(2, 40)(rng);
    PointSeq p(len, 2);
    p(0, 0) = step(rng);
    p(0, 1) = step(rng);
    for (int i = 1; i < len; ++i) {
      p(i, 0) = p(i - 1, 0) + step(rng);
      p(i, 1) = p(i - 1, 1) + step(rng);
    }
    const PointSeq rec = offsets_to_positions(p.row(0).transpose(), positions_to_offsets(p));
    CHECK((rec - p.bottomRows(len - 1)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("agent type one-hot follows the fixed convention") {
  CHECK(encode_agent_type(AgentType::kPedestrian) == Eigen::Vector3d(1, 0, 0));
  CHECK(encode_agent_type(AgentType::kCyclist) == Eigen::Vector3d(0, 1, 0));
  CHECK(encode_agent_type(AgentType::kVehicle) == Eigen::Vector3d(0, 0, 1));
  for (int i = 0; i < 3; ++i)
    CHECK(encode_agent_type(static_cast<AgentType>(i)).sum() == Catch::Approx(1.0));
  CHECK_THROWS_AS(parse_agent_type("tram"), ParseError);
}
