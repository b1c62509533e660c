#include <catch2/catch.hpp>

#include "ppgkd/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

using namespace ppgkd;

namespace {

// Threshold local-maximum detector with a 0.33 s refractory window; the
// test-side oracle for beat locations.
std::vector<int> detect_peaks(const std::vector<double>& x, int sample_rate) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  const double thr = 0.5 * mx;
  const int refractory = static_cast<int>(0.33 * sample_rate);

  std::vector<int> peaks;
  for (int i = 1; i + 1 < static_cast<int>(x.size()); ++i) {
    const double v = x[static_cast<std::size_t>(i)];
    if (v < thr) continue;
    if (!(v > x[static_cast<std::size_t>(i - 1)] &&
          v > x[static_cast<std::size_t>(i + 1)]))
      continue;
    if (!peaks.empty() && i - peaks.back() < refractory) {
      if (v > x[static_cast<std::size_t>(peaks.back())]) peaks.back() = i;
      continue;
    }
    peaks.push_back(i);
  }
  return peaks;
}

double interval_cv(const std::vector<int>& peaks, int sample_rate) {
  REQUIRE(peaks.size() >= 3);
  std::vector<double> iv;
  for (std::size_t i = 1; i < peaks.size(); ++i)
    iv.push_back(static_cast<double>(peaks[i] - peaks[i - 1]) / sample_rate);
  double mean = 0.0;
  for (double v : iv) mean += v;
  mean /= static_cast<double>(iv.size());
  double var = 0.0;
  for (double v : iv) var += (v - mean) * (v - mean);
  var /= static_cast<double>(iv.size());
  return std::sqrt(var) / mean;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path((std::filesystem::temp_directory_path() /
              ("ppgkd_test_" + name + "_" + std::to_string(::getpid())))
                 .string()) {}
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("generate_ppg basics", "[datagen]") {
  SECTION("zero jitter at 60 bpm: 8 systolic peaks, exact label") {
    PpgRecord rec = generate_ppg(60.0, 8.0, 50, 0.0, 0.0, 0.0, 7);
    CHECK(rec.samples.size() == 400);
    CHECK(rec.label == 60.0);
    const auto peaks = detect_peaks(rec.samples, 50);
    CHECK(peaks.size() == 8);
  }
  SECTION("same seed and parameters give bit-identical samples") {
    PpgRecord a = generate_ppg(72.0, 8.0, 50, 0.1, 0.2, 0.3, 7);
    PpgRecord b = generate_ppg(72.0, 8.0, 50, 0.1, 0.2, 0.3, 7);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i)
      REQUIRE(a.samples[i] == b.samples[i]);
    CHECK(a.label == b.label);
  }
  SECTION("noisy 90 bpm case: label range and oracle peak count") {
    PpgRecord rec = generate_ppg(90.0, 8.0, 50, 0.05, 0.05, 0.1, 3);
    CHECK(rec.label >= 85.5);
    CHECK(rec.label <= 94.5);
    const auto peaks = detect_peaks(rec.samples, 50);
    CHECK(std::abs(static_cast<int>(peaks.size()) - 12) <= 1);
  }
  SECTION("clean signals are periodic with period rate*60/hr") {
    PpgRecord rec = generate_ppg(75.0, 8.0, 50, 0.0, 0.0, 0.0, 9);
    const int period = 50 * 60 / 75;  // 40 samples
    for (std::size_t i = 0; i + static_cast<std::size_t>(period) < rec.samples.size();
         ++i)
      REQUIRE(std::fabs(rec.samples[i] -
                        rec.samples[i + static_cast<std::size_t>(period)]) < 1e-9);
  }
  SECTION("signal is z-scored") {
    PpgRecord rec = generate_ppg(80.0, 8.0, 50, 0.1, 0.3, 0.2, 5);
    double mu = 0.0, var = 0.0;
    for (double v : rec.samples) mu += v;
    mu /= static_cast<double>(rec.samples.size());
    for (double v : rec.samples) var += (v - mu) * (v - mu);
    var /= static_cast<double>(rec.samples.size());
    CHECK(std::fabs(mu) < 1e-9);
    CHECK(std::fabs(var - 1.0) < 1e-9);
  }
  SECTION("rejected inputs") {
    CHECK_THROWS_AS(generate_ppg(20.0, 8.0, 50, 0, 0, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_ppg(250.0, 8.0, 50, 0, 0, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_ppg(60.0, 8.01, 50, 0, 0, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_ppg(60.0, -1.0, 50, 0, 0, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_ppg(60.0, 8.0, 50, -0.1, 0, 0, 1), std::invalid_argument);
  }
}

TEST_CASE("generate_hr_dataset", "[datagen]") {
  SECTION("degenerate range with zero jitter: labels exactly 60") {
    Dataset ds = generate_hr_dataset(3, 60.0, 60.0, 4.0, 25, 0.0, 0.05, 0.1, 11);
    REQUIRE(ds.size() == 3);
    for (const auto& r : ds.records) CHECK(r.label == 60.0);
  }
  SECTION("regenerating with the same seed gives identical datasets") {
    Dataset a = generate_hr_dataset(20, 50.0, 150.0, 4.0, 25, 0.05, 0.1, 0.1, 1);
    Dataset b = generate_hr_dataset(20, 50.0, 150.0, 4.0, 25, 0.05, 0.1, 0.1, 1);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a.records[i].label == b.records[i].label);
      for (std::size_t j = 0; j < a.records[i].samples.size(); ++j)
        REQUIRE(a.records[i].samples[j] == b.records[i].samples[j]);
    }
  }
  SECTION("empirical label mean concentrates near the range midpoint") {
    Dataset ds = generate_hr_dataset(100, 50.0, 150.0, 4.0, 25, 0.0, 0.05, 0.1, 1);
    double mean = 0.0;
    for (const auto& r : ds.records) mean += r.label;
    mean /= static_cast<double>(ds.size());
    CHECK(mean >= 90.0);
    CHECK(mean <= 110.0);
  }
  SECTION("invalid range rejected") {
    CHECK_THROWS_AS(generate_hr_dataset(1, 150.0, 50.0, 4.0, 25, 0, 0, 0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_hr_dataset(0, 50.0, 150.0, 4.0, 25, 0, 0, 0, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("generate_af_dataset", "[datagen]") {
  SECTION("positive count forced by rounding") {
    Dataset ds = generate_af_dataset(10, 0.3, 10.0, 50, 5);
    int positives = 0;
    for (const auto& r : ds.records) positives += r.label == 1.0 ? 1 : 0;
    CHECK(positives == 3);
  }
  SECTION("same seed gives identical label order") {
    Dataset a = generate_af_dataset(10, 0.3, 10.0, 50, 5);
    Dataset b = generate_af_dataset(10, 0.3, 10.0, 50, 5);
    for (std::size_t i = 0; i < a.size(); ++i)
      REQUIRE(a.records[i].label == b.records[i].label);
  }
  SECTION("AF-like records have strictly larger beat-interval CV") {
    Dataset ds = generate_af_dataset(12, 0.5, 10.0, 50, 17);
    double min_cv1 = 1e9, max_cv0 = 0.0;
    for (const auto& r : ds.records) {
      const double cv = interval_cv(detect_peaks(r.samples, 50), 50);
      if (r.label == 1.0)
        min_cv1 = std::min(min_cv1, cv);
      else
        max_cv0 = std::max(max_cv0, cv);
    }
    CHECK(min_cv1 > max_cv0);
  }
  SECTION("af_fraction outside (0,1) rejected") {
    CHECK_THROWS_AS(generate_af_dataset(10, 0.0, 10.0, 50, 5), std::invalid_argument);
    CHECK_THROWS_AS(generate_af_dataset(10, 1.0, 10.0, 50, 5), std::invalid_argument);
  }
}

TEST_CASE("dataset serialization", "[datagen][io]") {
  SECTION("round trip preserves everything at float-32 precision") {
    Dataset ds = generate_hr_dataset(5, 55.0, 140.0, 4.0, 25, 0.05, 0.1, 0.1, 23);
    TempFile tmp("roundtrip_hr");
    write_dataset(ds, tmp.path);
    Dataset back = read_dataset(tmp.path);
    REQUIRE(back.size() == ds.size());
    REQUIRE(back.task == ds.task);
    REQUIRE(back.sample_rate == ds.sample_rate);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(back.records[i].label ==
            static_cast<double>(static_cast<float>(ds.records[i].label)));
      for (std::size_t j = 0; j < ds.records[i].samples.size(); ++j)
        REQUIRE(back.records[i].samples[j] ==
                static_cast<double>(static_cast<float>(ds.records[i].samples[j])));
    }
  }
  SECTION("classification labels round-trip exactly") {
    Dataset ds = generate_af_dataset(6, 0.5, 4.0, 25, 3);
    TempFile tmp("roundtrip_af");
    write_dataset(ds, tmp.path);
    Dataset back = read_dataset(tmp.path);
    for (std::size_t i = 0; i < ds.size(); ++i)
      REQUIRE(back.records[i].label == ds.records[i].label);
  }
  SECTION("bad magic") {
    Dataset ds = generate_hr_dataset(2, 60.0, 80.0, 2.0, 25, 0, 0.05, 0, 1);
    TempFile tmp("badmagic");
    write_dataset(ds, tmp.path);
    {
      std::fstream f(tmp.path, std::ios::in | std::ios::out | std::ios::binary);
      f.write("XXXX", 4);
    }
    try {
      read_dataset(tmp.path);
      FAIL("expected bad-magic error");
    } catch (const IoError& e) {
      CHECK(e.kind == IoError::Kind::bad_magic);
    }
  }
  SECTION("declared record count larger than payload") {
    Dataset ds = generate_hr_dataset(2, 60.0, 80.0, 2.0, 25, 0, 0.05, 0, 1);
    TempFile tmp("truncated");
    write_dataset(ds, tmp.path);
    {
      // bump record_count at offset 12 from 2 to 3
      std::fstream f(tmp.path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(12);
      const unsigned char three[4] = {3, 0, 0, 0};
      f.write(reinterpret_cast<const char*>(three), 4);
    }
    try {
      read_dataset(tmp.path);
      FAIL("expected truncation error");
    } catch (const IoError& e) {
      CHECK(e.kind == IoError::Kind::truncated);
    }
  }
  SECTION("task/label mismatch") {
    Dataset ds = generate_af_dataset(2, 0.5, 2.0, 25, 9);
    TempFile tmp("labelmismatch");
    write_dataset(ds, tmp.path);
    {
      // overwrite the first record's label (right after its samples) with 7
      std::fstream f(tmp.path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(24 + 50 * 4);
      const unsigned char seven[4] = {7, 0, 0, 0};
      f.write(reinterpret_cast<const char*>(seven), 4);
    }
    try {
      read_dataset(tmp.path);
      FAIL("expected label-mismatch error");
    } catch (const IoError& e) {
      CHECK(e.kind == IoError::Kind::label_mismatch);
    }
  }
  SECTION("truncated file") {
    Dataset ds = generate_hr_dataset(2, 60.0, 80.0, 2.0, 25, 0, 0.05, 0, 1);
    TempFile tmp("shortfile");
    write_dataset(ds, tmp.path);
    std::filesystem::resize_file(tmp.path, 40);
    CHECK_THROWS_AS(read_dataset(tmp.path), IoError);
  }
  SECTION("writing an invalid label is rejected") {
    Dataset ds = generate_af_dataset(2, 0.5, 2.0, 25, 9);
    ds.records[0].label = 2.0;
    TempFile tmp("badlabel");
    try {
      write_dataset(ds, tmp.path);
      FAIL("expected label-mismatch error");
    } catch (const IoError& e) {
      CHECK(e.kind == IoError::Kind::label_mismatch);
    }
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(read_dataset("/nonexistent/ppgkd.ppgd"), IoError);
  }
}
