#pragma once

#include "centerline.hpp"
#include "core.hpp"
#include "dataset.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "network.hpp"
#include "phantom.hpp"
#include "trainer.hpp"
#include "tubemesh.hpp"
#include "volume.hpp"
