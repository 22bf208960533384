// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "rlx/dataset.hpp"
#include "rlx/spectra_reward.hpp"

using namespace rlx;

TEST(Dataset, SmallDatasetInvariants) {
  const auto ds = read_dataset(rlx::testing::small_dataset());
  EXPECT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.holdout_index, 5u);
  EXPECT_EQ(ds.training_indices().size(), 5u);
  EXPECT_GT(ds.integral_time, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& les = ds.les_snapshots[i];
    EXPECT_EQ(les.grid, ds.les_grid);
    EXPECT_TRUE(les.finite());
    // The LES state is the DNS state with modes >= 12 removed.
    const auto want = spectral::spectral_filter(ds.dns_snapshots[i], ds.les_grid);
    for (std::size_t j = 0; j < les.u.size(); ++j) EXPECT_NEAR(les.u[j], want.u[j], 1e-12);
  }
  for (int k = 1; k <= 9; ++k) EXPECT_GT(ds.mean_spectrum[k], 0.0) << k;
}

TEST(Dataset, FileRoundTripIsExact) {
  const auto ds = read_dataset(rlx::testing::small_dataset());
  const auto path = rlx::testing::temp_dir("dataset") / "copy.rlxd";
  write_dataset(path, ds);
  const auto back = read_dataset(path);
  EXPECT_EQ(back.mean_spectrum, ds.mean_spectrum);
  EXPECT_EQ(back.holdout_index, ds.holdout_index);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.les_snapshots[i], ds.les_snapshots[i]);
    EXPECT_EQ(back.dns_snapshots[i], ds.dns_snapshots[i]);
  }
}

TEST(Dataset, HoldOutGuard) {
  const auto ds = read_dataset(rlx::testing::small_dataset());
  EXPECT_THROW(load_initial_state(ds, ds.holdout_index), HoldOutViolation);
  EXPECT_NO_THROW(load_initial_state(ds, ds.holdout_index, true));
  EXPECT_EQ(load_initial_state(ds, 1), load_initial_state(ds, 1));
  EXPECT_EQ(load_initial_state(ds, 2).time, 0.0);
  EXPECT_THROW(load_initial_state(ds, 99), std::out_of_range);
}

TEST(Dataset, CorruptFileRejected) {
  const auto path = rlx::testing::temp_dir("dataset-bad") / "bad.rlxd";
  std::ofstream(path) << "not a dataset";
  EXPECT_ANY_THROW(read_dataset(path));
}

TEST(Dataset, IntegralTimeOfSingleMode) {
  // E only at k = 2 with total 0.5 (u_rms = 1): (pi/2) (E/k) / E / 1 = pi/4.
  std::vector<double> e(8, 0.0);
  e[2] = 0.5;
  EXPECT_NEAR(integral_time(e), std::numbers::pi / 4, 1e-12);
}
