#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "iaa/iaa.hpp"
#include "oracles.hpp"

using namespace iaa;

namespace {

std::string binary_bytes(const Dataset &d) {
  std::ostringstream os;
  write_binary(os, d);
  return os.str();
}

Dataset small() {
  RowMatrix x(4, 3);
  x << 0.5, -1.25, 2, 1, 0, 0, 3.5, 2, -1, 0.25, 0.75, 8;
  return Dataset::from_raw(x, {70, 3, 70, 12});
}

} // namespace

TEST(Dataset, RemapsLabelsInFirstAppearanceOrder) {
  const auto d = small();
  EXPECT_EQ(d.num_classes(), 3u);
  EXPECT_EQ(d.labels(), (std::vector<ClassId>{1, 2, 1, 3}));
  EXPECT_EQ(d.original_ids(), (std::vector<std::int64_t>{70, 3, 12}));
  EXPECT_EQ(d.raw_labels(), (std::vector<std::int64_t>{70, 3, 70, 12}));
}

TEST(Dataset, RejectsInvalidInput) {
  RowMatrix x(2, 2);
  x << 1, 2, 3, 4;
  EXPECT_THROW(Dataset::from_raw(x, {1}), DataError);
  EXPECT_THROW(Dataset::from_raw(RowMatrix(0, 2), {}), DataError);
  x(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(Dataset::from_raw(x, {1, 2}), DataError);
}

TEST(Distances, SymmetryAndTriangleInequality) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto m = oracle::gaussian(3, 7, rng);
    const Vector a = m.row(0), b = m.row(1), c = m.row(2);
    EXPECT_EQ(euclidean_distance(a, b), euclidean_distance(b, a));
    EXPECT_LE(euclidean_distance(a, c), euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-12);
    EXPECT_GE(euclidean_distance(a, b), 0.0);
  }
}

TEST(Distances, CosineRejectsZeroAndDimensionMismatch) {
  Vector a = Vector::Zero(3), b = Vector::Ones(3);
  EXPECT_THROW(cosine_similarity(a, b), NumericalError);
  EXPECT_THROW(euclidean_distance(Vector::Ones(2), b), DataError);
  EXPECT_DOUBLE_EQ(cosine_similarity(b, 2.0 * b), 1.0);
}

TEST(ClassIndexTest, GroupsMembers) {
  const auto idx = build_class_index({2, 1, 2, 3, 1});
  EXPECT_EQ(idx.of(1), (std::vector<std::size_t>{1, 4}));
  EXPECT_EQ(idx.of(2), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(idx.count(3), 1u);
}

TEST(BinaryFormat, LayoutIsLittleEndianWithHeader) {
  const auto bytes = binary_bytes(small());
  ASSERT_EQ(bytes.size(), 4u + 4 + 8 + 4 + 4 * 3 * 4 + 4 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "IAAD");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 4u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 3u);
  // first label 70 sits right after the float payload
  EXPECT_EQ(static_cast<unsigned char>(bytes[20 + 48]), 70u);
}

TEST(BinaryFormat, RoundTripsExactlyAtFloatPrecision) {
  std::mt19937_64 rng(9);
  RowMatrix x = oracle::gaussian(25, 6, rng);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x.data()[i] = static_cast<float>(x.data()[i]);
  std::vector<std::int64_t> labels;
  for (int i = 0; i < 25; ++i)
    labels.push_back(i % 4 * 10);
  const auto d = Dataset::from_raw(x, labels);
  std::istringstream is(binary_bytes(d));
  const auto back = read_binary(is);
  EXPECT_EQ(back.embeddings(), d.embeddings());
  EXPECT_EQ(back.raw_labels(), d.raw_labels());
}

TEST(BinaryFormat, RejectsCorruptInput) {
  auto bytes = binary_bytes(small());
  auto read = [](const std::string &b) {
    std::istringstream is(b);
    return read_binary(is);
  };
  EXPECT_THROW(read("IAAX" + bytes.substr(4)), DataError);
  auto v2 = bytes;
  v2[4] = 2;
  EXPECT_THROW(read(v2), DataError);
  EXPECT_THROW(read(bytes.substr(0, bytes.size() - 1)), DataError);
  EXPECT_THROW(read(bytes + "x"), DataError);
  EXPECT_THROW(read(bytes.substr(0, 10)), DataError);
}

TEST(BinaryFormat, RejectsLabelsOutsideU32) {
  RowMatrix x(1, 1);
  x << 1.0;
  std::ostringstream os;
  EXPECT_THROW(write_binary(os, Dataset::from_raw(x, {-1})), DataError);
}

TEST(CsvFormat, RoundTripsExactly) {
  std::mt19937_64 rng(2);
  const auto d = Dataset::from_raw(oracle::gaussian(10, 4, rng), {5, 5, 1, 1, 2, 2, 9, 9, 5, 1});
  std::ostringstream os;
  write_csv(os, d);
  std::istringstream is(os.str());
  const auto back = read_csv(is);
  EXPECT_EQ(back.embeddings(), d.embeddings());
  EXPECT_EQ(back.raw_labels(), d.raw_labels());
}

TEST(CsvFormat, HeaderAndErrors) {
  std::istringstream with_header("a,b,label\n1,2,3\n4,5,3\n");
  EXPECT_EQ(read_csv(with_header, {true}).size(), 2u);
  std::istringstream mismatch("1,2,3\n4,3\n");
  EXPECT_THROW(read_csv(mismatch), DataError);
  std::istringstream bad_label("1,2,3.5\n");
  EXPECT_THROW(read_csv(bad_label), DataError);
  std::istringstream junk("1,x,3\n");
  EXPECT_THROW(read_csv(junk), DataError);
  std::istringstream empty("");
  EXPECT_THROW(read_csv(empty), DataError);
}

TEST(Parallel, MatchesSerialAndPropagatesErrors) {
  set_thread_cap(4);
  std::vector<double> out(1000);
  parallel_for(out.size(), [&](std::size_t i) { out[i] = std::sqrt(static_cast<double>(i)); });
  for (std::size_t i = 0; i < out.size(); ++i)
    EXPECT_EQ(out[i], std::sqrt(static_cast<double>(i)));
  EXPECT_THROW(parallel_for(100,
                            [](std::size_t i) {
                              if (i == 77)
                                throw DataError("boom");
                            }),
               DataError);
  set_thread_cap(1);
}

TEST(Rng, KeyedStreamsAreReproducibleAndDistinct) {
  auto a = keyed_rng(7, Stream::augment, {1, 2});
  auto b = keyed_rng(7, Stream::augment, {1, 2});
  auto c = keyed_rng(7, Stream::augment, {2, 1});
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
}
