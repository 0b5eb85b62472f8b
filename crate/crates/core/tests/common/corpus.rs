//! Hand-labelled trace corpus: 50 well-formed traces and 50 broken ones.

#![allow(dead_code)]

pub struct Case {
    pub name: String,
    pub text: String,
    pub valid: bool,
}

fn area(regions: &[([f64; 4], f64)]) -> String {
    let items: Vec<String> = regions
        .iter()
        .map(|(b, d)| {
            format!(
                "{{\"bbox\":[{},{},{},{}],\"depth\":{d}}}",
                b[0], b[1], b[2], b[3]
            )
        })
        .collect();
    format!("<area>[{}]</area>", items.join(","))
}

fn step(regions: &[([f64; 4], f64)], text: &str) -> String {
    format!("{}<text>{text}</text>", area(regions))
}

fn trace(steps: &[String], answer: &str) -> String {
    format!("<think>{}</think><answer>{answer}</answer>", steps.concat())
}

const NARRATIONS: [&str; 5] = [
    "Look at the whole image.",
    "The mug is near the left edge, so zoom in there.",
    "Two candidates: 3 < 4 & both are red.",
    "Depth suggests the chair is closer than the table",
    "Über den Tisch hinaus: 看看桌子",
];

const ANSWERS: [&str; 5] = ["yes", "2", "the red mug", " left side ", "B"];

fn valid_cases() -> Vec<Case> {
    let mut out = Vec::new();
    for i in 0..40 {
        let n_steps = 1 + i % 5;
        let steps: Vec<String> = (0..n_steps)
            .map(|k| {
                let lo = 0.05 * k as f64;
                let mut regions = vec![([lo, lo, 1.0 - lo, 1.0 - lo], 0.1 + 0.02 * i as f64)];
                if (i + k) % 3 == 0 {
                    regions.push(([0.0, 0.9, 0.125, 1.0], 0.75));
                }
                step(&regions, NARRATIONS[(i + k) % NARRATIONS.len()])
            })
            .collect();
        out.push(Case {
            name: format!("valid_generated_{i:02}"),
            text: trace(&steps, ANSWERS[i % ANSWERS.len()]),
            valid: true,
        });
    }
    let one = step(&[([0.1, 0.2, 0.3, 0.4], 0.5)], "narration");
    let hand = [
        ("leading_and_trailing_ws", format!("  \n{}\n\t", trace(std::slice::from_ref(&one), "x"))),
        ("ws_between_tags", format!("<think>\n  {one}\n</think>\n<answer>x</answer>")),
        ("ws_between_area_and_text", "<think><area>[{\"bbox\":[0,0,1,1],\"depth\":0.3}]</area>  <text>t</text></think><answer>a</answer>".to_owned()),
        ("json_with_spaces", "<think><area> [ { \"bbox\" : [0.1, 0.1, 0.5, 0.5], \"depth\" : 0.4 } ] </area><text>t</text></think><answer>a</answer>".to_owned()),
        ("key_order_swapped", "<think><area>[{\"depth\":0.4,\"bbox\":[0.1,0.1,0.5,0.5]}]</area><text>t</text></think><answer>a</answer>".to_owned()),
        ("integer_coordinates", "<think><area>[{\"bbox\":[0,0,1,1],\"depth\":1}]</area><text>t</text></think><answer>a</answer>".to_owned()),
        ("depth_zero", "<think><area>[{\"bbox\":[0,0,1,1],\"depth\":0}]</area><text>t</text></think><answer>a</answer>".to_owned()),
        ("empty_narration", "<think><area>[{\"bbox\":[0,0,1,1],\"depth\":0.5}]</area><text></text></think><answer>a</answer>".to_owned()),
        ("exponent_number", "<think><area>[{\"bbox\":[1e-1,0,5e-1,1],\"depth\":2.5e-1}]</area><text>t</text></think><answer>a</answer>".to_owned()),
        ("multiline_answer", format!("<think>{one}</think><answer>line one\nline two</answer>")),
    ];
    for (name, text) in hand {
        out.push(Case {
            name: format!("valid_{name}"),
            text,
            valid: true,
        });
    }
    out
}

fn invalid_cases() -> Vec<Case> {
    let ok = "<area>[{\"bbox\":[0.1,0.1,0.5,0.5],\"depth\":0.4}]</area><text>t</text>";
    let wrap = |inner: &str| format!("<think>{inner}</think><answer>a</answer>");
    let with_area = |json: &str| wrap(&format!("<area>{json}</area><text>t</text>"));
    let hand: Vec<(&str, String)> = vec![
        ("empty_input", String::new()),
        ("plain_text", "The answer is 42.".into()),
        ("answer_only", "<answer>a</answer>".into()),
        ("think_only", format!("<think>{ok}</think>")),
        ("missing_think_close", format!("<think>{ok}<answer>a</answer>")),
        ("missing_answer_close", format!("<think>{ok}</think><answer>a")),
        ("no_steps", "<think></think><answer>a</answer>".into()),
        ("text_before_area", wrap("<text>t</text><area>[{\"bbox\":[0,0,1,1],\"depth\":0.5}]</area>")),
        ("two_areas", wrap("<area>[{\"bbox\":[0,0,1,1],\"depth\":0.5}]</area><area>[{\"bbox\":[0,0,1,1],\"depth\":0.5}]</area><text>t</text>")),
        ("area_without_text", wrap("<area>[{\"bbox\":[0,0,1,1],\"depth\":0.5}]</area>")),
        ("stray_text_in_think", wrap(&format!("hmm {ok}"))),
        ("stray_text_between_blocks", format!("<think>{ok}</think> so <answer>a</answer>")),
        ("trailing_text", format!("{} done", wrap(ok))),
        ("second_answer", format!("{}<answer>b</answer>", wrap(ok))),
        ("second_think", format!("<think>{ok}</think><think>{ok}</think><answer>a</answer>")),
        ("nested_think", format!("<think><think>{ok}</think></think><answer>a</answer>")),
        ("answer_inside_think", format!("<think>{ok}<answer>a</answer></think>")),
        ("reserved_tag_in_text", wrap("<area>[{\"bbox\":[0,0,1,1],\"depth\":0.5}]</area><text>see <area> here</text>")),
        ("reserved_tag_in_answer", format!("<think>{ok}</think><answer>a <think></answer>")),
        ("empty_answer", format!("<think>{ok}</think><answer>   </answer>")),
        ("text_before_think", format!("Sure! {}", wrap(ok))),
        ("uppercase_tags", format!("<THINK>{ok}</THINK><ANSWER>a</ANSWER>")),
        ("malformed_json", with_area("[{\"bbox\":[0,0,1,1],\"depth\":0.5}")),
        ("json_object_not_array", with_area("{\"bbox\":[0,0,1,1],\"depth\":0.5}")),
        ("empty_region_list", with_area("[]")),
        ("missing_depth", with_area("[{\"bbox\":[0,0,1,1]}]")),
        ("missing_bbox", with_area("[{\"depth\":0.5}]")),
        ("extra_key", with_area("[{\"bbox\":[0,0,1,1],\"depth\":0.5,\"label\":\"cup\"}]")),
        ("three_coordinates", with_area("[{\"bbox\":[0,0,1],\"depth\":0.5}]")),
        ("five_coordinates", with_area("[{\"bbox\":[0,0,1,1,1],\"depth\":0.5}]")),
        ("string_coordinate", with_area("[{\"bbox\":[\"0\",0,1,1],\"depth\":0.5}]")),
        ("string_depth", with_area("[{\"bbox\":[0,0,1,1],\"depth\":\"near\"}]")),
        ("null_depth", with_area("[{\"bbox\":[0,0,1,1],\"depth\":null}]")),
        ("inverted_x", with_area("[{\"bbox\":[0.6,0,0.2,1],\"depth\":0.5}]")),
        ("inverted_y", with_area("[{\"bbox\":[0,0.9,1,0.1],\"depth\":0.5}]")),
        ("zero_width", with_area("[{\"bbox\":[0.5,0,0.5,1],\"depth\":0.5}]")),
        ("zero_height", with_area("[{\"bbox\":[0,0.5,1,0.5],\"depth\":0.5}]")),
        ("coordinate_above_one", with_area("[{\"bbox\":[0,0,1.2,1],\"depth\":0.5}]")),
        ("negative_coordinate", with_area("[{\"bbox\":[-0.1,0,1,1],\"depth\":0.5}]")),
        ("depth_above_one", with_area("[{\"bbox\":[0,0,1,1],\"depth\":1.5}]")),
        ("negative_depth", with_area("[{\"bbox\":[0,0,1,1],\"depth\":-0.2}]")),
        ("pixel_coordinates", with_area("[{\"bbox\":[10,20,200,300],\"depth\":0.5}]")),
        ("trailing_comma_json", with_area("[{\"bbox\":[0,0,1,1],\"depth\":0.5},]")),
        ("region_not_object", with_area("[[0,0,1,1]]")),
        ("unterminated_area", "<think><area>[{\"bbox\":[0,0,1,1],\"depth\":0.5}]<text>t</text></think><answer>a</answer>".to_owned()),
        ("unterminated_text", "<think><area>[{\"bbox\":[0,0,1,1],\"depth\":0.5}]</area><text>t</think><answer>a</answer>".into()),
        ("misspelled_close", format!("<think>{ok}</thnik><answer>a</answer>")),
        ("answer_before_think", format!("<answer>a</answer><think>{ok}</think>")),
        ("only_whitespace", " \n\t ".into()),
        ("nan_depth", with_area("[{\"bbox\":[0,0,1,1],\"depth\":NaN}]")),
    ];
    hand.into_iter()
        .map(|(name, text)| Case {
            name: format!("invalid_{name}"),
            text,
            valid: false,
        })
        .collect()
}

pub fn corpus() -> Vec<Case> {
    let mut all = valid_cases();
    all.extend(invalid_cases());
    all
}
