//! Top-down SVG of a scene. The table's x axis runs down the page and y
//! runs left to right, so the robot base sits at the top edge.

use std::collections::BTreeSet;
use std::fmt::Write;

use gensim_core::dsl::Color;
use gensim_core::world::{Footprint, SceneSnapshot, SnapshotObject};

/// Pixels per meter.
pub const SCALE: f64 = 800.0;

fn px(v: f64) -> String {
    let s = format!("{:.2}", v * SCALE);
    // keep "-0.00" out of the output so equal scenes give equal bytes
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fill(o: &SnapshotObject) -> String {
    if o.fixed {
        format!("url(#hatch-{})", o.color.as_str())
    } else {
        o.color.hex().to_string()
    }
}

pub fn render_scene_svg(scene: &SceneSnapshot) -> String {
    let ws = scene.workspace;
    let (w, h) = (ws.y_max - ws.y_min, ws.x_max - ws.x_min);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        px(w),
        px(h),
        px(w),
        px(h)
    );
    let hatched: BTreeSet<Color> = scene.objects.iter().filter(|o| o.fixed).map(|o| o.color).collect();
    if !hatched.is_empty() {
        out += "<defs>\n";
        for c in hatched {
            let _ = writeln!(
                out,
                r##"<pattern id="hatch-{}" patternUnits="userSpaceOnUse" width="6" height="6" patternTransform="rotate(45)"><rect width="6" height="6" fill="{}"/><line x1="0" y1="0" x2="0" y2="6" stroke="#333333" stroke-width="1.5"/></pattern>"##,
                c.as_str(),
                c.hex()
            );
        }
        out += "</defs>\n";
    }
    let _ = writeln!(
        out,
        r##"<rect class="ws" x="0.00" y="0.00" width="{}" height="{}" fill="#f4f1ea" stroke="#888888"/>"##,
        px(w),
        px(h)
    );
    // lower objects first so stacks read correctly
    let mut order: Vec<usize> = (0..scene.objects.len()).collect();
    order.sort_by(|&a, &b| {
        let (oa, ob) = (&scene.objects[a], &scene.objects[b]);
        (oa.pose.z - oa.size[2] / 2.0)
            .total_cmp(&(ob.pose.z - ob.size[2] / 2.0))
            .then(a.cmp(&b))
    });
    for i in order {
        let o = &scene.objects[i];
        let (cx, cy) = (o.pose.y - ws.y_min, o.pose.x - ws.x_min);
        let title = format!("<title>{}</title>", escape(&o.id));
        match Footprint::for_asset(o.kind, o.size) {
            Footprint::Rect { hx, hy } => {
                // world yaw turns x toward y; on the page that is clockwise
                let deg = -o.pose.yaw.to_degrees();
                let _ = writeln!(
                    out,
                    r##"<rect class="obj" data-kind="{}" x="{}" y="{}" width="{}" height="{}" transform="rotate({:.2} {} {})" fill="{}" stroke="#222222">{title}</rect>"##,
                    o.kind,
                    px(cx - hy),
                    px(cy - hx),
                    px(2.0 * hy),
                    px(2.0 * hx),
                    if deg.abs() < 0.005 { 0.0 } else { deg },
                    px(cx),
                    px(cy),
                    fill(o),
                );
            }
            Footprint::Disc { r } => {
                let _ = writeln!(
                    out,
                    r##"<circle class="obj" data-kind="{}" cx="{}" cy="{}" r="{}" fill="{}" stroke="#222222">{title}</circle>"##,
                    o.kind,
                    px(cx),
                    px(cy),
                    px(r),
                    fill(o),
                );
            }
            Footprint::Point => {
                let _ = writeln!(
                    out,
                    r##"<circle class="obj" data-kind="{}" cx="{}" cy="{}" r="2.00" fill="{}" stroke="#222222">{title}</circle>"##,
                    o.kind,
                    px(cx),
                    px(cy),
                    fill(o),
                );
            }
        }
    }
    out += "</svg>\n";
    out
}
