#pragma once

#include <random>

#include "ahe/bundle.hpp"
#include "ahe/forms.hpp"

namespace ahe {

// Smooth random fields built from the lowest Fourier modes; used by tests and selftest.
using Rng = std::mt19937_64;

ScalarField random_periodic_scalar(const AffineTorus& t, Rng& rng, double amplitude, bool real = true);
Form random_periodic_form(const AffineTorus& t, Rng& rng, int p, int q, double amplitude);
MetricField random_metric(const AffineTorus& t, Rng& rng, double amplitude);
HermitianField random_periodic_hermitian(const AffineTorus& t, int rank, Rng& rng, double amplitude, bool real);
HermitianField random_periodic_hpd(const AffineTorus& t, int rank, Rng& rng, double amplitude, bool real);
// Twisted metric U^{-*} exp(Y) U^{-1} with Y random periodic Hermitian.
HermitianField random_twisted_metric(const FlatBundle& b, const AffineTorus& t, Rng& rng, double amplitude);
// H0^{-1} S for a random twisted Hermitian S: an equivariant h0-self-adjoint field.
EndField random_selfadjoint(const FlatBundle& b, const AffineTorus& t, const HermitianField& H0, Rng& rng,
                            double amplitude);
// H0^{-1} H' for a random twisted metric H': an equivariant h0-self-adjoint positive field.
EndField random_positive(const FlatBundle& b, const AffineTorus& t, const HermitianField& H0, Rng& rng,
                         double amplitude);
// Random invertible complex (or real) matrix close to the identity.
Mat random_matrix(int rank, Rng& rng, double amplitude, bool real);

}  // namespace ahe
