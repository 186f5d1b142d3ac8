fn main() {
    println!("eit");
}
