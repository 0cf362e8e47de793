#pragma once

#include "spectra/common.hpp"
#include "spectra/data.hpp"
#include "spectra/features.hpp"
#include "spectra/harness.hpp"
#include "spectra/hdc.hpp"
#include "spectra/liunet.hpp"
#include "spectra/metrics.hpp"
#include "spectra/rocket.hpp"
#include "spectra/synthetic.hpp"
#include "spectra/training.hpp"
