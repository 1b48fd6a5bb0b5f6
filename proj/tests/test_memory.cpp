#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "asrpu/memory.hpp"

using namespace asrpu;

TEST(TensorBuffer, ReserveCountsBytes) {
  SharedMemory shm(512 * 1024);
  auto& b = shm.create<float>("mfcc", 80);
  b.reserve_output(3);
  EXPECT_EQ(b.occupied_bytes(), 960);
  EXPECT_EQ(shm.occupied_bytes(), 960);
  b.publish(3);
  EXPECT_EQ(b.live_items(), 3);
  EXPECT_EQ(b.next_write(), 3);
}

TEST(TensorBuffer, TotalOverflowIsCapacityError) {
  SharedMemory shm(512 * 1024);
  auto& a = shm.create<std::int8_t>("a", 1024);
  auto& b = shm.create<std::int8_t>("b", 1024);
  a.reserve_output(300);
  EXPECT_THROW(b.reserve_output(300), CapacityError);
  b.reserve_output(212);
  EXPECT_EQ(shm.occupied_bytes(), 512 * 1024);
}

TEST(TensorBuffer, PerBufferCapacity) {
  SharedMemory shm(1 << 20);
  auto& a = shm.create<float>("a", 4, 2);
  a.reserve_output(2);
  EXPECT_THROW(a.reserve_output(1), CapacityError);
}

TEST(TensorBuffer, ConvWindowConsumption) {
  // Window 10, stride 2: 4 outputs need inputs [0, 16); the next output
  // starts at input 8, so 8 items are consumed and 8 stay live.
  SharedMemory shm(1 << 20);
  auto& in = shm.create<float>("in", 1);
  for (int i = 0; i < 16; ++i) in.push(std::vector<float>{static_cast<float>(i)});
  const int k = 10, s = 2;
  const int outputs = (16 - k) / s + 1;
  EXPECT_EQ(outputs, 4);
  in.consume_inputs(outputs * s);
  EXPECT_EQ(in.live_items(), 8);
  EXPECT_EQ(in.first_live(), 8);
  // Sliding-window oracle: each remaining window start reads the right values.
  EXPECT_EQ(in.item(8)[0], 8.0f);
  EXPECT_EQ(in.item(15)[0], 15.0f);
  EXPECT_THROW(in.item(7), std::out_of_range);
}

TEST(TensorBuffer, ConsumeEdgeCases) {
  SharedMemory shm(1 << 20);
  auto& in = shm.create<float>("in", 2);
  in.push(std::vector<float>{1, 2});
  in.consume_inputs(0);
  EXPECT_EQ(in.live_items(), 1);
  EXPECT_THROW(in.consume_inputs(2), std::logic_error);
  in.consume_inputs(1);
  EXPECT_EQ(in.live_items(), 0);
}

TEST(TensorBuffer, ReadersReleaseIndependently) {
  SharedMemory shm(1 << 20);
  auto& b = shm.create<float>("x", 1);
  const int r0 = b.add_reader(), r1 = b.add_reader();
  for (int i = 0; i < 5; ++i) b.push(std::vector<float>{static_cast<float>(i)});
  b.consume_inputs(4, r0);
  EXPECT_EQ(b.first_live(), 0);
  b.consume_inputs(2, r1);
  EXPECT_EQ(b.first_live(), 2);
  EXPECT_EQ(b.item(2)[0], 2.0f);
  b.consume_inputs(3, r1);
  EXPECT_EQ(b.first_live(), 4);
}

TEST(TensorBuffer, StreamHasNoLossOrDuplication) {
  std::mt19937 rng(5);
  SharedMemory shm(1 << 20);
  auto& b = shm.create<std::int8_t>("s", 1);
  std::vector<int> read;
  int written = 0;
  for (int step = 0; step < 200; ++step) {
    const int n = static_cast<int>(rng() % 4);
    b.reserve_output(n);
    for (int i = 0; i < n; ++i) b.slot(b.next_write() + i)[0] = static_cast<std::int8_t>((written + i) % 100);
    b.publish(n);
    written += n;
    const auto live = b.live_items();
    const auto take = live ? static_cast<std::int64_t>(rng() % (live + 1)) : 0;
    for (std::int64_t i = 0; i < take; ++i) read.push_back(b.item(b.first_live() + i)[0]);
    b.consume_inputs(take);
  }
  for (std::size_t i = 0; i < read.size(); ++i) ASSERT_EQ(read[i], static_cast<int>(i % 100));
}

TEST(SharedMemory, ClearAllRewinds) {
  SharedMemory shm(1 << 20);
  auto& b = shm.create<float>("x", 10);
  for (int i = 0; i < 3; ++i) b.push(std::vector<float>(10, 1.0f));
  shm.clear_all();
  EXPECT_EQ(shm.occupied_bytes(), 0);
  EXPECT_EQ(b.next_write(), 0);
  b.push(std::vector<float>(10, 2.0f));
  EXPECT_EQ(b.item(0)[0], 2.0f);
}

TEST(ModelMemory, DmaTiming) {
  ModelMemory mm(1 << 20, 8);
  EXPECT_EQ(mm.dma_prefetch(1, 720000, 100), 100 + 90000);
  EXPECT_TRUE(mm.is_resident(1));
  EXPECT_EQ(mm.dma_prefetch(1, 720000, 200000), 200000);
  EXPECT_EQ(mm.hits(), 1);
  EXPECT_THROW(mm.dma_prefetch(2, 1440000, 0), CapacityError);
  // A second transfer queues behind the first.
  ModelMemory q(1 << 20, 8);
  q.dma_prefetch(1, 800, 0);
  EXPECT_EQ(q.dma_prefetch(2, 80, 50), 110);
  EXPECT_FALSE(q.is_resident(1));
}

namespace {

// Stack-distance oracle: a reference hits iff fewer than `capacity` distinct
// lines were touched since its previous use.
std::pair<std::int64_t, std::int64_t> stack_distance_hits(const std::vector<std::uint64_t>& lines, std::int64_t capacity) {
  std::vector<std::uint64_t> stack;
  std::int64_t hits = 0, misses = 0;
  for (auto l : lines) {
    auto it = std::find(stack.begin(), stack.end(), l);
    if (it != stack.end()) {
      const auto depth = it - stack.begin();
      (depth < capacity ? hits : misses)++;
      stack.erase(it);
    } else {
      ++misses;
    }
    stack.insert(stack.begin(), l);
  }
  return {hits, misses};
}

}  // namespace

TEST(LruCache, RepeatedAccessHits) {
  LruCacheModel c(1024, 64);
  EXPECT_FALSE(c.access(100, 16));
  EXPECT_TRUE(c.access(100, 16));
  EXPECT_EQ(c.hits(), 1);
  EXPECT_EQ(c.misses(), 1);
}

TEST(LruCache, WorkingSetFits) {
  LruCacheModel c(64 * 16, 64);
  for (int sweep = 0; sweep < 5; ++sweep)
    for (int l = 0; l < 16; ++l) c.access(static_cast<std::uint64_t>(l) * 64);
  EXPECT_EQ(c.misses(), 16);
  EXPECT_EQ(c.hits(), 64);
}

TEST(LruCache, MatchesStackDistanceOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t cap = 1 + static_cast<std::int64_t>(rng() % 32);
    const std::uint64_t footprint = 1 + rng() % 128;
    std::vector<std::uint64_t> lines(2000);
    for (auto& l : lines) l = rng() % footprint;
    LruCacheModel c(cap * 64, 64);
    for (auto l : lines) c.access(l * 64 + rng() % 64);
    const auto [h, m] = stack_distance_hits(lines, cap);
    EXPECT_EQ(c.hits(), h);
    EXPECT_EQ(c.misses(), m);
  }
}

TEST(LruCache, RandomOverLargeFootprint) {
  std::mt19937_64 rng(2);
  const std::int64_t cap = 64, footprint = 1024;
  LruCacheModel c(cap * 64, 64);
  for (int i = 0; i < 200000; ++i) c.access((rng() % footprint) * 64);
  EXPECT_NEAR(c.hit_rate(), static_cast<double>(cap) / footprint, 0.01);
}

TEST(LruCache, AccessSpanningLines) {
  LruCacheModel c(1024, 64);
  c.access(60, 8);
  EXPECT_EQ(c.misses(), 2);
  EXPECT_TRUE(c.access(64, 1));
}
