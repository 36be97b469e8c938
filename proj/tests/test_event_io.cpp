#include <doctest.h>

#include "sparta/event_io.hpp"
#include "sparta/rng.hpp"

using namespace sparta;

namespace {

std::string spk1_bytes(uint16_t w, uint16_t h, const std::vector<Event>& events) {
    EventStream s;
    s.width = w;
    s.height = h;
    s.events = events;
    return serialize_spk1(s);
}

} // namespace

TEST_CASE("spk1 single-record round-trip") {
    const std::string bytes = spk1_bytes(4, 4, {{5, 1, 2, 1}});
    EventStream s = parse_spk1(bytes);
    CHECK(s.width == 4);
    CHECK(s.height == 4);
    REQUIRE(s.events.size() == 1);
    CHECK(s.events[0] == Event{5, 1, 2, 1});
}

TEST_CASE("spk1 header layout is byte-exact") {
    const std::string bytes = spk1_bytes(4, 4, {{5, 1, 2, 1}});
    const unsigned char expect[] = {0x53, 0x50, 0x4B, 0x31, 4, 0, 4, 0, 1, 0, 0, 0,
                                    5,    0,    0,    0,    1, 0, 2, 0, 1};
    REQUIRE(bytes.size() == sizeof(expect));
    for (size_t i = 0; i < sizeof(expect); ++i)
        CHECK(static_cast<unsigned char>(bytes[i]) == expect[i]);
}

TEST_CASE("empty csv parses to empty stream") {
    EventStream s = parse_csv("t,x,y,p\n");
    CHECK(s.events.empty());
}

TEST_CASE("csv rows are sorted, binary mode rejects the same bytes") {
    const std::string csv = "t,x,y,p\n10,0,0,1\n3,1,0,0\n7,0,1,1\n";
    EventStream s = parse_csv(csv, Geometry{2, 2});
    REQUIRE(s.events.size() == 3);
    CHECK(s.events[0].t == 3);
    CHECK(s.events[1].t == 7);
    CHECK(s.events[2].t == 10);
    CHECK_THROWS_AS(parse_spk1(csv), FormatError);
}

TEST_CASE("binary stream with decreasing timestamps is rejected") {
    std::string bytes = spk1_bytes(4, 4, {{9, 0, 0, 1}, {9, 1, 1, 0}});
    // Patch the second record's timestamp below the first.
    bytes[12 + 9] = 2;
    CHECK_THROWS_AS(parse_spk1(bytes), ValidationError);
}

TEST_CASE("out-of-range coordinates name the record") {
    std::string bytes = spk1_bytes(4, 4, {{1, 0, 0, 1}, {2, 3, 3, 1}});
    bytes[12 + 9 + 4] = 7; // second record x = 7 on a 4x4 sensor
    try {
        parse_spk1(bytes);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("record 1") != std::string::npos);
    }
}

TEST_CASE("round-trip is the identity on valid streams") {
    Rng rng(99);
    EventStream s;
    s.width = 64;
    s.height = 48;
    uint32_t t = 0;
    for (int i = 0; i < 500; ++i) {
        t += static_cast<uint32_t>(rng.uniform_u64(50));
        s.events.push_back({t, static_cast<uint16_t>(rng.uniform_u64(64)),
                            static_cast<uint16_t>(rng.uniform_u64(48)),
                            static_cast<uint8_t>(rng.uniform_u64(2))});
    }
    EventStream back = parse_spk1(serialize_spk1(s));
    REQUIRE(back.events.size() == s.events.size());
    for (size_t i = 0; i < s.events.size(); ++i) CHECK(back.events[i] == s.events[i]);
}

TEST_CASE("static scene emits only the appearance transient") {
    EventStream s = synth_moving_bar({8, 8}, 0.0, 0.5, 0.0, 7);
    CHECK(s.events.size() == 8); // one ON per row at t=0
    for (const Event& e : s.events) {
        CHECK(e.t == 0);
        CHECK(e.polarity == 1);
    }
}

TEST_CASE("synthesizer is deterministic per seed") {
    EventStream a = synth_moving_bar({16, 16}, 120.0, 0.3, 80.0, 42);
    EventStream b = synth_moving_bar({16, 16}, 120.0, 0.3, 80.0, 42);
    CHECK(serialize_spk1(a) == serialize_spk1(b));
    EventStream c = synth_moving_bar({16, 16}, 120.0, 0.3, 80.0, 43);
    CHECK(serialize_spk1(a) != serialize_spk1(c));
}

TEST_CASE("noise count is poisson-consistent") {
    // 100 Hz/px on 32x32 for 1 s: lambda = 102400, sigma = 320.
    EventStream s = synth_moving_bar({32, 32}, 0.0, 1.0, 100.0, 1234);
    const auto noise = static_cast<double>(s.events.size()) - 32.0; // minus transient
    CHECK(std::abs(noise - 102400.0) < 3.0 * 320.0);
}

TEST_CASE("zero-area geometry is rejected") {
    CHECK_THROWS_AS(synth_moving_bar({0, 8}, 1.0, 1.0, 0.0, 1), ValidationError);
}

TEST_CASE("binning: single event lands in its cell") {
    EventStream s;
    s.width = 4;
    s.height = 4;
    s.events = {{5, 0, 0, 1}};
    SpikeTensor frames = bin_to_frames(s, 1, 4, 4);
    CHECK(frames.at(0, 1, 0, 0) == 1);
    CHECK(frames.count_spikes() == 1);
}

TEST_CASE("binning clamps to binary") {
    EventStream s;
    s.width = 2;
    s.height = 2;
    s.events = {{1, 0, 0, 1}, {2, 0, 0, 1}, {3, 0, 0, 1}};
    SpikeTensor frames = bin_to_frames(s, 1, 2, 2);
    CHECK(frames.at(0, 1, 0, 0) == 1);
    CHECK(frames.count_spikes() == 1);
}

TEST_CASE("binning: ten uniform events hit one decile each") {
    EventStream s;
    s.width = 1;
    s.height = 1;
    for (uint32_t i = 0; i < 10; ++i) s.events.push_back({i * 10, 0, 0, 1});
    SpikeTensor frames = bin_to_frames(s, 10, 1, 1);
    for (int t = 0; t < 10; ++t) CHECK(frames.at(t, 1, 0, 0) == 1);
    CHECK(frames.count_spikes() == 10);
}

TEST_CASE("binning formula puts every event in exactly one bin") {
    Rng rng(5);
    EventStream s;
    s.width = 8;
    s.height = 8;
    uint32_t t = 100;
    for (int i = 0; i < 300; ++i) {
        t += static_cast<uint32_t>(rng.uniform_u64(37));
        s.events.push_back({t, static_cast<uint16_t>(rng.uniform_u64(8)),
                            static_cast<uint16_t>(rng.uniform_u64(8)),
                            static_cast<uint8_t>(rng.uniform_u64(2))});
    }
    const int T = 7;
    SpikeTensor frames = bin_to_frames(s, T, 4, 4);
    CHECK(frames.count_spikes() <= s.events.size());
    const uint64_t t_min = s.events.front().t, t_max = s.events.back().t;
    for (const Event& e : s.events) {
        const int bin = std::min<int>(T - 1, static_cast<int>(static_cast<uint64_t>(T) *
                                                              (e.t - t_min) / (t_max - t_min + 1)));
        CHECK(frames.at(bin, e.polarity, e.y / 2, e.x / 2) == 1);
    }
}

TEST_CASE("binning is invariant to permuting same-timestamp events") {
    EventStream a;
    a.width = 4;
    a.height = 4;
    a.events = {{5, 0, 0, 1}, {5, 1, 1, 0}, {5, 2, 2, 1}, {9, 3, 3, 1}};
    EventStream b = a;
    std::swap(b.events[0], b.events[2]);
    CHECK(bin_to_frames(a, 4, 4, 4).data == bin_to_frames(b, 4, 4, 4).data);
}

TEST_CASE("degenerate single-timestamp stream lands in bin zero") {
    EventStream s;
    s.width = 2;
    s.height = 2;
    s.events = {{7, 0, 0, 1}, {7, 1, 1, 0}};
    SpikeTensor frames = bin_to_frames(s, 5, 2, 2);
    CHECK(frames.at(0, 1, 0, 0) == 1);
    CHECK(frames.at(0, 0, 1, 1) == 1);
    CHECK(frames.count_spikes() == 2);
}

TEST_CASE("binning rejects non-dividing output geometry") {
    EventStream s;
    s.width = 10;
    s.height = 10;
    s.events = {{0, 0, 0, 1}};
    CHECK_THROWS_AS(bin_to_frames(s, 2, 3, 3), ValidationError);
}

TEST_CASE("shift_space relocates and validates bounds") {
    EventStream s;
    s.width = 4;
    s.height = 4;
    s.events = {{0, 3, 3, 1}};
    EventStream moved = shift_space(s, 4, 8, {16, 16});
    CHECK(moved.events[0].x == 7);
    CHECK(moved.events[0].y == 11);
    CHECK_THROWS_AS(shift_space(s, 13, 0, {16, 16}), ValidationError);
}
