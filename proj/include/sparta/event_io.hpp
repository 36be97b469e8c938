#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparta/types.hpp"

namespace sparta {

// One polarity event from a DVS-style sensor. t is microseconds.
struct Event {
    uint32_t t = 0;
    uint16_t x = 0;
    uint16_t y = 0;
    uint8_t polarity = 0; // 0 = OFF, 1 = ON
};

inline bool operator==(const Event& a, const Event& b) {
    return a.t == b.t && a.x == b.x && a.y == b.y && a.polarity == b.polarity;
}

// Time-sorted event sequence with its sensor geometry. Ties preserve the
// order events appeared in the source.
struct EventStream {
    uint16_t width = 0;
    uint16_t height = 0;
    std::vector<Event> events;
};

struct Geometry {
    uint16_t width = 0;
    uint16_t height = 0;
};

// Binary "SPK1" container (little-endian): magic 53 50 4B 31, u16 width,
// u16 height, u32 count, then count records of {u32 t_us, u16 x, u16 y,
// u8 polarity}. Timestamps must be non-decreasing. See docs/formats.md.
EventStream parse_spk1(const std::string& bytes);
std::string serialize_spk1(const EventStream& stream);

// CSV fallback: header "t,x,y,p", one decimal-integer event per line.
// Rows may arrive unsorted; they are stably sorted by t. The geometry is
// not part of the format, so pass it in or let it default to the bounding
// box of the events.
EventStream parse_csv(const std::string& bytes, std::optional<Geometry> geometry = {});

// Dispatches on the magic: SPK1 if present, CSV otherwise.
EventStream parse_event_file(const std::string& bytes, std::optional<Geometry> csv_geometry = {});

// Synthetic workload: a one-pixel-wide vertical bar sweeping right at
// `velocity_px_s` (wrapping at the border), ON events on the leading edge,
// OFF on the trailing edge, plus uniform background noise at `noise_rate_hz`
// events per pixel per second. Deterministic for a fixed seed.
EventStream synth_moving_bar(Geometry geometry, double velocity_px_s, double duration_s,
                             double noise_rate_hz, uint64_t seed);

// Accumulates events into T binary frames of shape (T, 2, h_out, w_out);
// channel 0 collects OFF events, channel 1 ON events. The time axis is split
// into T equal bins over the stream's own [t_min, t_max]; spatial reduction
// is block-OR. A cell is 1 iff at least one matching event fell into it.
SpikeTensor bin_to_frames(const EventStream& stream, int timesteps, int h_out, int w_out);

// Helpers for composing synthetic datasets out of synthesizer calls.
EventStream shift_time(const EventStream& stream, uint32_t offset_us);
EventStream merge_streams(const EventStream& a, const EventStream& b);

// Re-homes a stream into a larger sensor at offset (dx, dy).
EventStream shift_space(const EventStream& stream, uint16_t dx, uint16_t dy, Geometry target);

} // namespace sparta
