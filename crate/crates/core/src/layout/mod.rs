//! Page layout analysis: clustering OCR lines into segments and deriving the
//! reading order.

pub mod dbscan;
pub mod grouping;

pub use dbscan::{dbscan, dbscan_points, DistanceMatrix, Labels, Neighborhood, Points, SparseDistances};
pub use grouping::{
    cluster_rows, cluster_within_row, column_bands, group_page, segment_bbox, split_columns,
    GroupingConfig, Layout, LineFragment, LineGroup,
};
