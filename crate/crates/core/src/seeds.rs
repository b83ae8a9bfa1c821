//! The ten hand-written tasks every library starts from.

macro_rules! seed {
    ($name:literal) => {
        ($name, include_str!(concat!("../../../tasks/", $name, ".task")))
    };
}

pub const SEED_TASKS: [(&str, &str); 10] = [
    seed!("build-car"),
    seed!("color-coordinated-zone-arrangement"),
    seed!("color-ordered-insertion"),
    seed!("cylinder-in-colorful-container"),
    seed!("four-corner-pyramid-challenge"),
    seed!("multicolor-block-bridge"),
    seed!("place-blue-on-line-ends"),
    seed!("put-block-in-bowl"),
    seed!("put-blues-around-red"),
    seed!("stack-blocks-in-container"),
];

pub fn seed_source(name: &str) -> Option<&'static str> {
    SEED_TASKS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
