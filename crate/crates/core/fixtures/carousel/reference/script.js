const images = [
  { url: 'images/lake.jpg', alt: 'Lake', id: 'img1', description: 'A quiet lake below the mountains' },
  { url: 'images/forest.jpg', alt: 'Forest', id: 'img2', description: 'Morning fog in a pine forest' },
  { url: 'images/desert.jpg', alt: 'Desert', id: 'img3', description: 'Dunes at sunset' },
  { url: 'images/coast.jpg', alt: 'Coast', id: 'img4', description: 'Waves against the cliffs' }
];

const thumbnails = document.getElementById('thumbnails');
const featured = document.getElementById('featured');
const description = document.getElementById('current_description');

images.forEach((image) => {
  const img = document.createElement('img');
  img.src = image.url;
  img.alt = image.alt;
  img.id = image.id;
  img.addEventListener('click', () => {
    featured.src = image.url;
    featured.alt = image.alt;
    description.textContent = image.description;
    document.querySelectorAll('#thumbnails .highlighted').forEach((el) => el.classList.remove('highlighted'));
    img.classList.add('highlighted');
  });
  thumbnails.appendChild(img);
});
