use flowgrasp_cli::{artifacts, commands};
use flowgrasp_core::energy;
use flowgrasp_core::hand::forward_kinematics;
use flowgrasp_core::math::Vec3;
use flowgrasp_core::metrics::benchmark_samples;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let sigma: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.02);
    let k: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(32);
    let top_k: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(5);
    let t_max: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.98);
    let cloud: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(512);
    let ckpt_path = args
        .get(6)
        .map(String::as_str)
        .unwrap_or("/tmp/accept/ckpt_6k.json");

    let text = std::fs::read_to_string(ckpt_path)?;
    let ckpt = artifacts::parse_checkpoint(&text)?;
    let mut cfg = ckpt.config.clone();
    cfg.data.cloud_size = cloud;
    let (_specs, scenes) = commands::bench_scenes(&cfg)?;
    let hand = &ckpt.pipeline.hand;

    println!("sigma {sigma} K {k} top_k {top_k} t_max {t_max} cloud {cloud} ckpt {ckpt_path}");
    println!(
        "{:>8} {:>7} {:>7} {:>7} {:>7} {:>9} {:>9} {:>9}",
        "variant", "succ", "penOK", "conOK", "sprOK", "pen|con", "con|pen", "spr|p&c"
    );
    for (label, w) in [
        ("vanilla", None),
        ("erf", Some((0.4, 0.0, 0.0))),
        ("all", Some((0.4, 0.4, 0.4))),
    ] {
        let guidance = w.map(|w: (f64, f64, f64)| {
            let mut g = cfg.guidance.clone();
            g.sigma_local = sigma;
            g.num_candidates = k;
            g.t_max = t_max;
            g.energy = g.energy.with_terms(w.0, w.1, w.2);
            g.energy.top_k = top_k;
            g
        });
        let samples =
            benchmark_samples(&ckpt.pipeline, &scenes, &cfg.sampler, guidance.as_ref(), cfg.seed)?;

        let (mut n, mut succ, mut pen_ok, mut con_ok, mut spr_ok) = (0usize, 0, 0, 0, 0);
        let (mut pen_given_con, mut con_n) = (0usize, 0usize);
        let (mut con_given_pen, mut pen_n) = (0usize, 0usize);
        let (mut spr_given_pc, mut pc_n) = (0usize, 0usize);
        let mut contact_hist = vec![0usize; hand.num_fingers + 1];
        let mut pens: Vec<f64> = Vec::new();
        for s in &samples {
            let Some(c) = s.result.config.as_ref().filter(|_| !s.result.failed) else {
                continue;
            };
            n += 1;
            let prim = &scenes[s.object].prim;
            let hp = forward_kinematics(c, hand)?;
            let pen = energy::erf(&hp, prim);
            pens.push(pen);
            let mut contacts = 0usize;
            let mut mean_dir = Vec3::ZERO;
            let center = prim.center();
            for tip in &hp.fingertips {
                if prim.sdf(*tip).abs() <= 0.05 {
                    contacts += 1;
                    if let Some(dir) = (center - *tip).normalized() {
                        mean_dir += dir;
                    }
                }
            }
            contact_hist[contacts.min(hand.num_fingers)] += 1;
            let p_ok = pen <= 0.02;
            let c_ok = contacts >= 3;
            let s_ok = c_ok && (mean_dir * (1.0 / contacts as f64)).norm() <= 0.8;
            if p_ok {
                pen_ok += 1;
                pen_n += 1;
                if c_ok {
                    con_given_pen += 1;
                }
            }
            if c_ok {
                con_ok += 1;
                con_n += 1;
                if p_ok {
                    pen_given_con += 1;
                }
            }
            if s_ok {
                spr_ok += 1;
            }
            if p_ok && c_ok {
                pc_n += 1;
                if s_ok {
                    spr_given_pc += 1;
                }
            }
            if p_ok && c_ok && s_ok {
                succ += 1;
            }
        }
        let f = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        println!(
            "{:>8} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>9.3} {:>9.3} {:>9.3}",
            label,
            f(succ, n),
            f(pen_ok, n),
            f(con_ok, n),
            f(spr_ok, n),
            f(pen_given_con, con_n),
            f(con_given_pen, pen_n),
            f(spr_given_pc, pc_n)
        );
        pens.sort_by(f64::total_cmp);
        let q = |p: f64| pens[((pens.len() - 1) as f64 * p) as usize];
        println!(
            "          contacts hist {:?}  pen q10 {:.4} q50 {:.4} q90 {:.4}",
            contact_hist,
            q(0.1),
            q(0.5),
            q(0.9)
        );
    }
    Ok(())
}
