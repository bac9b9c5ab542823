"""Flow-based network intrusion detection research toolkit.

Pipeline: pcap decoding -> bidirectional flow assembly -> 77-feature
vectors -> schedule-driven labeling -> dataset transforms -> four
classifier families -> within/cross-dataset experiment matrices, with
mRMR feature selection and KDE/PCA feature-space diagnostics.
"""

__version__ = "0.1.0"
