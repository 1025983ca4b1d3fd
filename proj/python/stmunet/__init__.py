# Copyright 2026 the stmunet authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Desk-scale STM-UNet segmentation kit.

A from-scratch CNN + Swin-skip + axial-shift-MLP segmentation model with its
own tensor library, reverse-mode differentiation, Adam training loop, and
IoU/Dice evaluation. The heavy lifting lives in the `_core` extension.
"""

from ._core import (
    Model,
    ModelConfig,
    conv2d,
    dice,
    evaluate,
    gradcheck_suite,
    iou,
    softmax,
    synth_blobs,
    train,
    __version__,
)

__all__ = [
    "Model",
    "ModelConfig",
    "conv2d",
    "dice",
    "evaluate",
    "gradcheck_suite",
    "iou",
    "softmax",
    "synth_blobs",
    "train",
    "__version__",
]
