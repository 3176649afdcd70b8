//! Track, obstacle and footprint geometry.

mod footprint;
mod obstacle;
mod track;

pub use footprint::{OrientedBox, CAR_HEIGHT, CAR_LENGTH, CAR_WIDTH};
pub use obstacle::{
    place_obstacles, Obstacle, Side, OBSTACLE_COUNT, OBSTACLE_HEIGHT, OBSTACLE_SIZE,
};
pub use track::{
    build_default_track, PlacedSegment, Projection, Segment, Track, TrackError, TrackLayout,
    TrackSample, LAYOUT_VERSION,
};
