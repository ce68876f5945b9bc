use trendgan_cli::config::{DataSource, RunConfig, Split};

#[test]
fn defaults_follow_the_desk_settings() {
    let cfg = RunConfig::parse("data = synth\n").unwrap();
    assert_eq!(cfg.data, DataSource::Synth);
    assert_eq!(cfg.levels, 25);
    assert_eq!(cfg.scenarios, 250);
    assert_eq!(cfg.settings, vec![5, 13, 21]);
    assert_eq!(cfg.split, Split::Auto);
    let hp = cfg.hyper_params(6).unwrap();
    assert_eq!((hp.wb, hp.wf, hp.latent_size, hp.lr), (40, 20, 12, 2e-5));
}

#[test]
fn echo_round_trips_bit_identically() {
    let text = "data = prices.csv\nsplit = 2014-12-31\ngan.lr = 0.00017\ngan.batch_size = 8\n\
                synth.rho = 0.123456789012345\nseeds = 3,1,2\nnsga.mutation_prob = 0.3\ncollapse_threshold = 1e-7\n";
    let cfg = RunConfig::parse(text).unwrap();
    let echo = cfg.to_text();
    let again = RunConfig::parse(&echo).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.to_text(), echo);
    assert_eq!(cfg.synth.rho.to_bits(), 0.123456789012345f64.to_bits());
    assert!(echo.contains("gan.wb = auto\n"));
}

#[test]
fn unknown_and_malformed_keys_are_errors() {
    for bad in [
        "data = synth\nlevel = 25\n",
        "data = synth\ngan.learning_rate = 1\n",
        "data = synth\ngan.assets = 3\n",
        "data = synth\nlevels = many\n",
        "data = synth\nlevels = 1\n",
        "data = synth\nsettings = 5,30\n",
        "data = synth\nno equals sign\n",
        "data = synth\nlevels = 25\nlevels = 25\n",
        "levels = 25\n",
    ] {
        assert!(RunConfig::parse(bad).is_err(), "{bad:?} accepted");
    }
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let cfg = RunConfig::parse("# desk run\n\ndata = synth\n  scenarios = 9  \n").unwrap();
    assert_eq!(cfg.scenarios, 9);
}
