#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "starcomplete/mstar.hpp"
#include "starcomplete/tensor.hpp"
#include "starcomplete/tns_io.hpp"
#include "test_support.hpp"

using namespace starcomplete;

namespace {

Tensor3 example_2x2x2() {
    // frontal slices [[1,2],[3,4]] and [[5,6],[7,8]]
    Tensor3 t(2, 2, 2);
    t(0, 0, 0) = 1; t(0, 1, 0) = 2; t(1, 0, 0) = 3; t(1, 1, 0) = 4;
    t(0, 0, 1) = 5; t(0, 1, 1) = 6; t(1, 0, 1) = 7; t(1, 1, 1) = 8;
    return t;
}

} // namespace

TEST(Tensor3, RejectsZeroExtentsAndBadLength) {
    EXPECT_THROW(Tensor3(0, 2, 2), dimension_error);
    EXPECT_THROW(Tensor3(2, 2, 2, std::vector<cplx>(7)), dimension_error);
}

TEST(Tensor3, OutOfRangeAccessIsReported) {
    Tensor3 t(2, 3, 4);
    EXPECT_NO_THROW(t.at(1, 2, 3));
    EXPECT_THROW(t.at(2, 0, 0), std::out_of_range);
    EXPECT_THROW(t.at(0, 3, 0), std::out_of_range);
    EXPECT_THROW(t.at(0, 0, 4), std::out_of_range);
    EXPECT_THROW(t.frontal(4), std::out_of_range);
}

TEST(Flatten, ConcatenatesFrontalSlices) {
    const Matrix f = flatten(example_2x2x2());
    Matrix expect(2, 4);
    expect << 1, 2, 5, 6, 3, 4, 7, 8;
    EXPECT_EQ(f, expect);
    EXPECT_EQ(unflatten(expect, 2, 2, 2), example_2x2x2());
}

TEST(Flatten, IndexFormulaOnRandomTensor) {
    CounterRng rng(11, 0);
    const Tensor3 a = sc_test::random_tensor(3, 4, 5, rng);
    const Matrix f = flatten(a);
    for (int s = 0; s < 30; ++s) {
        const auto i = std::size_t(rng.below(3)), j = std::size_t(rng.below(4)), k = std::size_t(rng.below(5));
        EXPECT_EQ(f(Eigen::Index(i), Eigen::Index(k * 4 + j)), a(i, j, k));
    }
    // row i is the column-major vectorization of the horizontal slice A(i,:,:)
    const Matrix h = a.horizontal(1);
    for (Eigen::Index c = 0; c < f.cols(); ++c) EXPECT_EQ(f(1, c), h.data()[c]);
}

TEST(Flatten, RoundTripOnRandomShapes) {
    CounterRng rng(12, 0);
    for (int s = 0; s < 20; ++s) {
        const auto n1 = 1 + rng.below(6), n2 = 1 + rng.below(6), n3 = 1 + rng.below(6);
        const Tensor3 a = sc_test::random_tensor(n1, n2, n3, rng);
        const Matrix f = flatten(a);
        EXPECT_EQ(unflatten(f, n1, n2, n3), a);
        EXPECT_EQ(frobenius_norm(a), std::sqrt(squared_norm(std::span<const cplx>(f.data(), std::size_t(f.size())))));
    }
}

TEST(Flatten, ShapeMismatchAndZero) {
    EXPECT_THROW(unflatten(Matrix::Zero(2, 3), 2, 2, 2), dimension_error);
    const Tensor3 z = unflatten(Matrix::Zero(2, 4), 2, 2, 2);
    EXPECT_EQ(frobenius_norm(z), 0.0);
}

TEST(TwistSqueeze, Definition) {
    Matrix a(2, 3);
    a << 1, 2, 3, 4, 5, 6;
    const Tensor3 t = twist(a);
    EXPECT_EQ(t.n2(), 1u);
    EXPECT_EQ(t(0, 0, 1), cplx(2.0));
    EXPECT_EQ(squeeze(t), a);
    EXPECT_THROW(squeeze(Tensor3(2, 2, 3)), dimension_error);

    // unfold3 of a lateral slice: column i holds row i of A
    const Matrix u = unfold3(t);
    ASSERT_EQ(u.rows(), 3);
    ASSERT_EQ(u.cols(), 2);
    for (Eigen::Index i = 0; i < 2; ++i) EXPECT_EQ(Matrix(u.col(i).transpose()), Matrix(a.row(i)));
}

TEST(TwistSqueeze, RoundTripRandom) {
    CounterRng rng(13, 0);
    const Matrix a = sc_test::random_matrix(5, 7, rng);
    EXPECT_EQ(squeeze(twist(a)), a);
}

TEST(Unfold3, Tubes) {
    Tensor3 t(1, 1, 3);
    t(0, 0, 0) = 1; t(0, 0, 1) = 2; t(0, 0, 2) = 3;
    const Matrix u = unfold3(t);
    ASSERT_EQ(u.rows(), 3);
    ASSERT_EQ(u.cols(), 1);
    EXPECT_EQ(u(0, 0), cplx(1)); EXPECT_EQ(u(1, 0), cplx(2)); EXPECT_EQ(u(2, 0), cplx(3));

    const Matrix e = unfold3(example_2x2x2());
    EXPECT_EQ(e(0, 0), cplx(1));
    EXPECT_EQ(e(1, 0), cplx(5));

    CounterRng rng(14, 0);
    const Tensor3 a = sc_test::random_tensor(4, 5, 6, rng);
    EXPECT_EQ(fold3(unfold3(a), 4, 5, 6), a);
    EXPECT_THROW(fold3(Matrix::Zero(5, 20), 4, 5, 6), dimension_error);
}

TEST(Views, AgreeWithIndexing) {
    CounterRng rng(15, 0);
    const Tensor3 a = sc_test::random_tensor(3, 4, 5, rng);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t k = 0; k < 5; ++k) {
                EXPECT_EQ(a.frontal(k)(Eigen::Index(i), Eigen::Index(j)), a(i, j, k));
                EXPECT_EQ(a.horizontal(i)(Eigen::Index(j), Eigen::Index(k)), a(i, j, k));
                EXPECT_EQ(a.lateral(j)(Eigen::Index(i), Eigen::Index(k)), a(i, j, k));
                EXPECT_EQ(a.tube(i, j)(Eigen::Index(k)), a(i, j, k));
            }
}

TEST(FrobeniusNorm, Basics) {
    Tensor3 ones(2, 2, 2);
    for (auto& z : ones.data()) z = 1.0;
    EXPECT_DOUBLE_EQ(frobenius_norm(ones), std::sqrt(8.0));
    EXPECT_EQ(frobenius_norm(Tensor3(2, 2, 2)), 0.0);

    CounterRng rng(16, 0);
    const Tensor3 a = sc_test::random_tensor(4, 3, 6, rng);
    const double n2 = squared_norm(a.data());
    EXPECT_NEAR(tip(a, a, Transform::dft(6)).real(), n2, 1e-12 * n2);
    EXPECT_NEAR(tip(a, a, Transform::dct(6)).real(), n2, 1e-12 * n2);
}

TEST(TnsIo, RoundTripRealAndComplex) {
    CounterRng rng(17, 0);
    const Tensor3 c = sc_test::random_tensor(3, 2, 4, rng);
    const Tensor3 r = sc_test::random_tensor(2, 5, 1, rng, false);
    for (const Tensor3* t : {&c, &r}) {
        std::stringstream ss;
        write_tns(ss, *t);
        const std::string bytes = ss.str();
        EXPECT_EQ(bytes.substr(0, 4), "TNS1");
        EXPECT_EQ(std::uint8_t(bytes[8]), t->is_real() ? 0 : 1);
        const std::size_t scalars = t->is_real() ? 1 : 2;
        EXPECT_EQ(bytes.size(), 8 + 1 + 24 + 8 * scalars * t->size());
        EXPECT_EQ(read_tns(ss), *t);
    }
}

TEST(TnsIo, ExtentsAreLittleEndian) {
    std::stringstream ss;
    write_tns(ss, Tensor3(258, 1, 2));
    const std::string b = ss.str();
    EXPECT_EQ(std::uint8_t(b[9]), 2);
    EXPECT_EQ(std::uint8_t(b[10]), 1);
    EXPECT_EQ(std::uint8_t(b[17]), 1);
    EXPECT_EQ(std::uint8_t(b[25]), 2);
}

TEST(TnsIo, RejectsBadMagicDtypeAndTruncation) {
    std::stringstream good;
    write_tns(good, Tensor3(2, 2, 2));
    std::string bytes = good.str();

    std::string bad_magic = bytes;
    bad_magic[3] = '2';
    std::stringstream s1(bad_magic);
    EXPECT_THROW(read_tns(s1), format_error);

    std::string bad_dtype = bytes;
    bad_dtype[8] = 7;
    std::stringstream s2(bad_dtype);
    EXPECT_THROW(read_tns(s2), format_error);

    std::stringstream s3(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_tns(s3), format_error);
}
