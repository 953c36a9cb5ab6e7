from .augment import AugEntry, read_aug_manifest, selective_augment, write_aug_manifest
from .dataset import (ISIC2019_CLASSES, ClassStats, DatasetError, LabeledDataset, compute_stats,
                      load_ground_truth)
from .elastic import DeformationField, elastic_deform, resize, sample_deformation
from .split import SplitError, SplitPlan, allocate, read_split_manifest, stratified_split, write_split_manifest

__all__ = [
    "AugEntry", "read_aug_manifest", "selective_augment", "write_aug_manifest",
    "ISIC2019_CLASSES", "ClassStats", "DatasetError", "LabeledDataset", "compute_stats", "load_ground_truth",
    "DeformationField", "elastic_deform", "resize", "sample_deformation",
    "SplitError", "SplitPlan", "allocate", "read_split_manifest", "stratified_split", "write_split_manifest",
]
