"""
FFCE Segmenter - Data Pipeline
Volumes, slice samples, synthetic phantoms and the training dataset.
"""

from data.samples import (
    LabelVolume,
    SliceSample,
    Volume,
    extract_slice_sample,
    minmax_normalize,
    presence_vector,
    stack_window,
)
