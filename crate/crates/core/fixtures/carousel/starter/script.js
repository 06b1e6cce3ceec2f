const images = [
  { url: 'images/lake.jpg', alt: 'Lake', id: 'img1', description: 'A quiet lake below the mountains' },
  { url: 'images/forest.jpg', alt: 'Forest', id: 'img2', description: 'Morning fog in a pine forest' },
  { url: 'images/desert.jpg', alt: 'Desert', id: 'img3', description: 'Dunes at sunset' },
  { url: 'images/coast.jpg', alt: 'Coast', id: 'img4', description: 'Waves against the cliffs' }
];
